use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text_prep::{TokenStream, Vocabulary};
use crate::util::{seeded_rng, sha256_hex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CbowConfig {
    pub dim: usize,
    /// Width of the sliding block; the centre word is the target and the
    /// remaining `window_block - 1` words are its context.
    pub window_block: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial step size, decayed linearly to `lr * 1e-4`.
    pub lr: f64,
    pub noise_power: f64,
    pub seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        CbowConfig {
            dim: 100,
            window_block: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.05,
            noise_power: 0.75,
            seed: 0,
        }
    }
}

/// Trained word vectors (input side) plus the output-side weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
    pub input: Array2<f64>,
    pub output: Array2<f64>,
    /// Mean example loss of each training epoch.
    pub loss_trace: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(tokens: Vec<String>, input: Array2<f64>) -> Result<Self> {
        if tokens.len() != input.nrows() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} rows", tokens.len()),
                actual: format!("{} rows", input.nrows()),
            });
        }
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let output = Array2::zeros(input.raw_dim());
        Ok(EmbeddingMatrix {
            tokens,
            ids,
            input,
            output,
            loss_trace: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.input.ncols()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn vector(&self, token: &str) -> Option<ArrayView1<'_, f64>> {
        self.id(token).map(|i| self.input.row(i))
    }

    /// Mean of the vectors of the in-vocabulary tokens; `None` if there are none.
    pub fn mean_vector<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Option<Array1<f64>> {
        let mut sum = Array1::zeros(self.dim());
        let mut n = 0usize;
        for t in tokens {
            if let Some(v) = self.vector(t) {
                sum += &v;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Text form: `dim=<d> vocab=<n>` header, then `token v1 .. vd` per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("dim={} vocab={}\n", self.dim(), self.len());
        for (tok, row) in self.tokens.iter().zip(self.input.rows()) {
            out.push_str(tok);
            for v in row {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_text().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .unwrap_or_default();
        let bad = |row: usize, m: &str| Error::MalformedRow {
            row,
            message: m.to_string(),
        };
        let mut dim = None;
        let mut n = None;
        for part in header.split_whitespace() {
            if let Some(v) = part.strip_prefix("dim=") {
                dim = v.parse::<usize>().ok();
            } else if let Some(v) = part.strip_prefix("vocab=") {
                n = v.parse::<usize>().ok();
            }
        }
        let (dim, n) = dim.zip(n).ok_or_else(|| bad(1, "expected `dim=<d> vocab=<n>` header"))?;
        let mut tokens = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * dim);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            tokens.push(parts.next().unwrap_or_default().to_string());
            let before = data.len();
            for p in parts {
                data.push(p.parse::<f64>().map_err(|_| bad(i + 2, "bad number"))?);
            }
            if data.len() - before != dim {
                return Err(bad(i + 2, "wrong number of components"));
            }
        }
        if tokens.len() != n {
            return Err(bad(1, "vocab count does not match the number of rows"));
        }
        let input = Array2::from_shape_vec((n, dim), data).expect("checked shape");
        EmbeddingMatrix::new(tokens, input)
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }
}

/// One training example per position of `doc`: `(context ids, target id)`.
/// Blocks at the document edges are truncated; single-word documents yield
/// nothing.
pub fn context_blocks(doc: &[usize], window_block: usize) -> Vec<(Vec<usize>, usize)> {
    let half = window_block / 2;
    (0..doc.len())
        .filter_map(|p| {
            let lo = p.saturating_sub(half);
            let hi = (p + half + 1).min(doc.len());
            let ctx: Vec<usize> = (lo..hi).filter(|&q| q != p).map(|q| doc[q]).collect();
            (!ctx.is_empty()).then_some((ctx, doc[p]))
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(x)` without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Loss and gradients of one negative-sampling CBOW example.
#[derive(Debug, Clone)]
pub struct CbowGrad {
    pub loss: f64,
    /// Gradient w.r.t. the averaged context vector.
    pub hidden: Array1<f64>,
    /// `(row, gradient)` pairs for the output matrix: target first, then negatives.
    pub output_rows: Vec<(usize, Array1<f64>)>,
}

/// `L = -ln σ(u_t·h) - Σ_k ln σ(-u_k·h)` with `h` the mean of the context
/// input vectors. Each context row receives `hidden / |context|`.
pub fn cbow_example_grad(
    input: &Array2<f64>,
    output: &Array2<f64>,
    context: &[usize],
    target: usize,
    negatives: &[usize],
) -> CbowGrad {
    let mut h = Array1::zeros(input.ncols());
    for &c in context {
        h += &input.row(c);
    }
    h /= context.len() as f64;

    let mut loss = 0.0;
    let mut hidden = Array1::zeros(input.ncols());
    let mut output_rows = Vec::with_capacity(negatives.len() + 1);
    for (row, label) in std::iter::once((target, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0))) {
        let u = output.row(row);
        let score = u.dot(&h);
        loss += if label == 1.0 {
            neg_log_sigmoid(score)
        } else {
            neg_log_sigmoid(-score)
        };
        let g = sigmoid(score) - label;
        hidden.scaled_add(g, &u);
        output_rows.push((row, &h * g));
    }
    CbowGrad {
        loss,
        hidden,
        output_rows,
    }
}

/// Cumulative unigram^power distribution for negative sampling.
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[usize], power: f64) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(power);
                acc
            })
            .collect();
        NoiseTable { cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let x = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }
}

/// Train CBOW embeddings with negative sampling over `corpus`.
///
/// Only tokens in `vocab` participate. Examples are visited in document
/// order, so a fixed seed gives bit-identical weights.
pub fn cbow_train(corpus: &[TokenStream], vocab: &Vocabulary, cfg: &CbowConfig) -> Result<EmbeddingMatrix> {
    if vocab.len() < cfg.negatives + 1 {
        return Err(Error::InvalidParameter(format!(
            "vocabulary of {} tokens is too small for {} negatives",
            vocab.len(),
            cfg.negatives
        )));
    }
    if cfg.dim == 0 || cfg.window_block < 2 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidParameter("dim, window_block and lr must be positive".into()));
    }
    let mut rng = seeded_rng(cfg.seed);
    let (n, d) = (vocab.len(), cfg.dim);
    let scale = 0.5 / d as f64;
    let input = Array2::from_shape_fn((n, d), |_| rng.random_range(-scale..scale));
    let mut emb = EmbeddingMatrix::new(vocab.tokens().to_vec(), input)?;

    let encoded: Vec<Vec<usize>> = corpus.iter().map(|doc| vocab.encode(doc)).collect();
    let counts: Vec<usize> = (0..n).map(|i| vocab.cf(i)).collect();
    let noise = NoiseTable::new(&counts, cfg.noise_power);
    let examples_per_epoch: usize = encoded
        .iter()
        .map(|doc| context_blocks(doc, cfg.window_block).len())
        .sum();
    let total_steps = (examples_per_epoch * cfg.epochs).max(1) as f64;
    let min_lr = cfg.lr * 1e-4;

    let mut step = 0usize;
    let mut negs = Vec::with_capacity(cfg.negatives);
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for doc in &encoded {
            for (ctx, target) in context_blocks(doc, cfg.window_block) {
                let lr = (cfg.lr * (1.0 - step as f64 / total_steps)).max(min_lr);
                step += 1;
                negs.clear();
                while negs.len() < cfg.negatives {
                    let s = noise.sample(&mut rng);
                    if s != target {
                        negs.push(s);
                    }
                }
                let g = cbow_example_grad(&emb.input, &emb.output, &ctx, target, &negs);
                loss_sum += g.loss;
                seen += 1;
                for (row, grad) in &g.output_rows {
                    emb.output.row_mut(*row).scaled_add(-lr, grad);
                }
                let share = lr / ctx.len() as f64;
                for &c in &ctx {
                    emb.input.row_mut(c).scaled_add(-share, &g.hidden);
                }
            }
        }
        let mean = if seen > 0 { loss_sum / seen as f64 } else { 0.0 };
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        log::debug!("cbow epoch {epoch}: mean loss {mean:.5}");
        emb.loss_trace.push(mean);
    }
    Ok(emb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::{generate_synthetic, SyntheticSpec};
    use crate::text_prep::{build_vocabulary, tokenize, WhitespaceTokenizer};
    use crate::util::cosine;

    #[test]
    fn five_word_block() {
        let blocks = context_blocks(&[0, 1, 2, 3, 4], 5);
        assert_eq!(blocks[2], (vec![0, 1, 3, 4], 2));
        // truncated at the edges
        assert_eq!(blocks[0], (vec![1, 2], 0));
        assert_eq!(blocks[4], (vec![2, 3], 4));
        assert!(context_blocks(&[7], 5).is_empty());
    }

    fn loss_only(input: &Array2<f64>, output: &Array2<f64>, ctx: &[usize], t: usize, negs: &[usize]) -> f64 {
        // independent evaluation of the objective
        let h: Array1<f64> = ctx.iter().map(|&c| input.row(c).to_owned()).fold(
            Array1::zeros(input.ncols()),
            |a, b| a + b,
        ) / ctx.len() as f64;
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        -s(output.row(t).dot(&h)).ln() - negs.iter().map(|&k| (1.0 - s(output.row(k).dot(&h))).ln()).sum::<f64>()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = seeded_rng(3);
        let input = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
        let output = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
        let ctx = [0usize, 1, 3, 1];
        let (target, negs) = (2usize, [4usize, 0]);
        let g = cbow_example_grad(&input, &output, &ctx, target, &negs);
        assert!((g.loss - loss_only(&input, &output, &ctx, target, &negs)).abs() < 1e-12);

        let mut grad_in = Array2::<f64>::zeros((5, 4));
        for &c in &ctx {
            grad_in.row_mut(c).scaled_add(1.0 / ctx.len() as f64, &g.hidden);
        }
        let mut grad_out = Array2::<f64>::zeros((5, 4));
        for (r, v) in &g.output_rows {
            grad_out.row_mut(*r).scaled_add(1.0, v);
        }
        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        for (which, analytic) in [(0, &grad_in), (1, &grad_out)] {
            for i in 0..5 {
                for j in 0..4 {
                    let (mut a, mut b) = (input.clone(), output.clone());
                    let (mut a2, mut b2) = (input.clone(), output.clone());
                    if which == 0 {
                        a[[i, j]] += eps;
                        a2[[i, j]] -= eps;
                    } else {
                        b[[i, j]] += eps;
                        b2[[i, j]] -= eps;
                    }
                    let num = (loss_only(&a, &b, &ctx, target, &negs) - loss_only(&a2, &b2, &ctx, target, &negs)) / (2.0 * eps);
                    let an = analytic[[i, j]];
                    let rel = (num - an).abs() / (num.abs() + an.abs()).max(1e-8);
                    worst = worst.max(rel);
                }
            }
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    fn two_topic_corpus() -> (Vec<TokenStream>, SyntheticSpec) {
        let spec = SyntheticSpec {
            n_classes: 2,
            n_samples: 400,
            vocab_per_class: 15,
            shared_vocab: 0,
            imbalance_exponent: 0.0,
            doc_length_range: (8, 16),
            seed: 11,
            ..SyntheticSpec::default()
        };
        let (recs, _) = generate_synthetic(&spec).unwrap();
        let docs = recs
            .iter()
            .map(|r| tokenize(&r.record.request_text, &WhitespaceTokenizer))
            .collect();
        (docs, spec)
    }

    #[test]
    fn disjoint_topics_separate_in_embedding_space() {
        let (docs, spec) = two_topic_corpus();
        let vocab = build_vocabulary(&docs, 1).unwrap();
        let cfg = CbowConfig { dim: 20, epochs: 5, seed: 1, ..CbowConfig::default() };
        let emb = cbow_train(&docs, &vocab, &cfg).unwrap();
        let words = |c: usize| -> Vec<Array1<f64>> {
            (0..spec.vocab_per_class)
                .map(|i| emb.vector(&crate::corpus_io::synthetic_word(c * spec.vocab_per_class + i)).unwrap().to_owned())
                .collect()
        };
        let (a, b) = (words(0), words(1));
        let mean_sim = |x: &[Array1<f64>], y: &[Array1<f64>], same: bool| {
            let mut s = 0.0;
            let mut n = 0.0;
            for (i, u) in x.iter().enumerate() {
                for (j, v) in y.iter().enumerate() {
                    if same && i == j {
                        continue;
                    }
                    s += cosine(u.as_slice().unwrap(), v.as_slice().unwrap());
                    n += 1.0;
                }
            }
            s / n
        };
        let intra = (mean_sim(&a, &a, true) + mean_sim(&b, &b, true)) / 2.0;
        let inter = mean_sim(&a, &b, false);
        assert!(intra > inter, "intra {intra} inter {inter}");
    }

    #[test]
    fn loss_decreases_over_first_epochs() {
        let (docs, _) = two_topic_corpus();
        let vocab = build_vocabulary(&docs, 1).unwrap();
        let cfg = CbowConfig { dim: 20, epochs: 5, seed: 2, ..CbowConfig::default() };
        let emb = cbow_train(&docs, &vocab, &cfg).unwrap();
        let trace = &emb.loss_trace;
        let increases: Vec<f64> = trace.windows(2).filter(|w| w[1] > w[0]).map(|w| w[1] / w[0] - 1.0).collect();
        assert!(increases.len() <= 1 && increases.iter().all(|&r| r <= 0.01), "{trace:?}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (docs, _) = two_topic_corpus();
        let vocab = build_vocabulary(&docs, 1).unwrap();
        let cfg = CbowConfig { dim: 8, epochs: 2, ..CbowConfig::default() };
        let a = cbow_train(&docs, &vocab, &cfg).unwrap();
        let b = cbow_train(&docs, &vocab, &cfg).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn tiny_vocabulary_is_rejected() {
        let docs: Vec<TokenStream> = vec![["a", "b", "c"].into_iter().collect()];
        let vocab = build_vocabulary(&docs, 1).unwrap();
        assert!(cbow_train(&docs, &vocab, &CbowConfig::default()).is_err());
    }

    #[test]
    fn text_format_round_trips() {
        let input = Array2::from_shape_vec((2, 3), vec![0.1, -2.5, 1e-17, 3.0, 0.0, -0.333]).unwrap();
        let emb = EmbeddingMatrix::new(vec!["a".into(), "b".into()], input).unwrap();
        let text = emb.to_text();
        assert!(text.starts_with("dim=3 vocab=2\n"));
        let f = tempfile::NamedTempFile::new().unwrap();
        emb.save(f.path()).unwrap();
        let back = EmbeddingMatrix::load(f.path()).unwrap();
        assert_eq!(back.input, emb.input);
        assert_eq!(back.tokens(), emb.tokens());
    }
}
