//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. A shared end-to-end CLI run on a 12-class synthetic
//! corpus backs the pipeline, architecture, hierarchy and determinism checks.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use serde_json::Value;

use hybridclf::classifiers::{
    gradient_check, nb_fit, ClassifierModel, Features, GradTarget, InMemorySet, MlpConfig, NbParams, NeuralModel,
    Predictor, ResCnnConfig, TrainConfig,
};
use hybridclf::clustering::{
    adjusted_rand_index, build_meta_map, entropy_assign, entropy_choice, gmm_em, kmeans, label_vectors_from_names,
    lda_fit, optics, select_k, AssignRule, CovarianceType, GmmParams, KMeansParams, LdaParams, MetaInputs,
    OpticsParams,
};
use hybridclf::corpus_io::{generate_synthetic, SyntheticSpec};
use hybridclf::evaluate::{compute_metrics, log_loss, select_best};
use hybridclf::features::{cbow_train, compute_woe_iv, tfidf_transform, CbowConfig, TagComboTable, WoeMode};
use hybridclf::hierarchy::{cascade_with, infer_cascade, load_hierarchy, HierarchicalModel};
use hybridclf::text_prep::{build_vocabulary, tokenize, TokenStream, WhitespaceTokenizer};
use hybridclf::util::{argmax, seeded_rng};
use hybridclf_cli::manifest::StageRecorder;
use hybridclf_cli::stages::train::encoder_for;
use hybridclf_cli::stages::{feature_hash, Prepared};
use hybridclf_cli::RunConfig;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- 1

fn tfidf_oracle() -> Check {
    let mut compared = 0;
    for (seed, n_docs) in [(1u64, 10usize), (2, 25), (3, 50)] {
        let spec = SyntheticSpec {
            n_classes: 4,
            n_samples: n_docs,
            vocab_per_class: 6,
            shared_vocab: 5,
            seed,
            ..SyntheticSpec::default()
        };
        let (recs, _) = generate_synthetic(&spec).map_err(e2s)?;
        let docs: Vec<TokenStream> = recs
            .iter()
            .map(|r| tokenize(&r.record.request_text, &WhitespaceTokenizer))
            .collect();
        for min_df in [1, 2] {
            let vocab = build_vocabulary(&docs, min_df).map_err(e2s)?;
            let n = docs.len() as f64;
            for doc in &docs {
                // brute force from raw counts
                let mut expected: Vec<(usize, f64)> = Vec::new();
                let mut seen: Vec<&String> = Vec::new();
                for tok in &doc.tokens {
                    if seen.contains(&tok) {
                        continue;
                    }
                    seen.push(tok);
                    let df = docs.iter().filter(|d| d.tokens.contains(tok)).count();
                    if df < min_df {
                        continue;
                    }
                    let tf = doc.tokens.iter().filter(|t| *t == tok).count() as f64;
                    let id = vocab.id(tok).ok_or_else(|| format!("`{tok}` missing from vocabulary"))?;
                    expected.push((id, tf * (n / df as f64).ln()));
                }
                expected.sort_by_key(|&(id, _)| id);
                let got = tfidf_transform(doc, &vocab).weights;
                ensure(got == expected, || format!("seed {seed}: {got:?} != {expected:?}"))?;
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} documents identical to brute force (0 tolerance)"))
}

// ---------------------------------------------------------------- 2

fn woe_oracle() -> Check {
    let table = TagComboTable {
        counts: vec![vec![5, 10, 5], vec![5, 2, 13], vec![5, 8, 7], vec![5, 1, 14]],
        combo_names: vec!["even".into(), "b".into(), "c".into()],
    };
    let r = compute_woe_iv(&table, 0.5, WoeMode::Percentage).map_err(e2s)?;
    // independently computed reference values
    let iv = [0.0, 1.1970825821147786, 0.627074898224214];
    let woe1 = [1.0330150061822965, -1.164209571153923, 0.627549898074132, -1.911423972984144];
    let woe2 = [-1.0486018680934484, 0.6690496289808847, -0.5690287878315621, 0.8973082809618651];
    let mut max_err: f64 = 0.0;
    for j in 0..3 {
        max_err = max_err.max((r.iv_per_combo[j] - iv[j]).abs());
    }
    for i in 0..4 {
        max_err = max_err.max((r.woe[i][1] - woe1[i]).abs());
        max_err = max_err.max((r.woe[i][2] - woe2[i]).abs());
    }
    ensure(max_err < 1e-9, || format!("max error {max_err:e}"))?;
    ensure(r.iv_per_combo[0].abs() < 1e-9, || format!("independent combo IV {}", r.iv_per_combo[0]))?;
    Ok(format!("max error {max_err:.1e}; independent combo IV {:.1e}", r.iv_per_combo[0]))
}

// ---------------------------------------------------------------- 3

fn nb_oracle() -> Check {
    // vocabulary 0 rain, 1 pipe, 2 tax; class A docs {rain},{rain,pipe}; class B {tax}
    let doc = |ids: &[usize]| Features::Sparse(ids.iter().map(|&i| (i, 1.0)).collect());
    let data = InMemorySet::new(vec![doc(&[0]), doc(&[0, 1]), doc(&[2])], vec![0, 0, 1]);
    let m = nb_fit(&data, &[0, 1], 3, &NbParams::default()).map_err(e2s)?;
    ensure(m.params.alpha == 0.2, || "default alpha is not 0.2".into())?;
    // hand arithmetic: (count + 0.2) / (n_class + 0.4), Bernoulli absence terms
    let cases: [(&[usize], f64); 6] = [
        (&[0], 0.9796067694195956),
        (&[1], 0.8136726331679965),
        (&[2], 0.010907240754284979),
        (&[0, 2], 0.4212347884336273),
        (&[], 0.4212347884336272),
        (&[0, 1, 2], 0.8136726331679967),
    ];
    let mut max_err: f64 = 0.0;
    for (ids, p_a) in cases {
        let x: Vec<(usize, f64)> = ids.iter().map(|&i| (i, 1.0)).collect();
        let p = m.predict_proba(&x);
        ensure(p.iter().all(|&v| v > 0.0), || format!("zero posterior for {ids:?}: {p:?}"))?;
        max_err = max_err.max((p[0] - p_a).abs()).max((p[1] - (1.0 - p_a)).abs());
    }
    ensure(max_err < 1e-9, || format!("max error {max_err:e}"))?;
    Ok(format!("6 documents, max error {max_err:.1e}, all posteriors > 0"))
}

// ---------------------------------------------------------------- 4

fn gmm_monotone() -> Check {
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for seed in 0..5u64 {
        let mut rng = seeded_rng(seed);
        let centres: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..2).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let pts: Vec<Vec<f64>> = (0..90)
            .map(|i| centres[i % 3].iter().map(|c| c + rng.random_range(-1.5..1.5)).collect())
            .collect();
        let km = kmeans(&pts, 3, &KMeansParams { seed, ..KMeansParams::default() }).map_err(e2s)?;
        for covariance in [CovarianceType::Diagonal, CovarianceType::Spherical] {
            let g = gmm_em(&pts, &km, &GmmParams { covariance, tol: 0.0, max_iter: 100, ..GmmParams::default() })
                .map_err(e2s)?;
            for w in g.log_likelihood_trace.windows(2) {
                worst = worst.max(w[0] - w[1]);
                steps += 1;
            }
        }
    }
    ensure(worst <= 1e-8, || format!("log-likelihood fell by {worst:e}"))?;
    Ok(format!("{steps} EM steps over seeds 0-4, largest decrease {worst:.1e}"))
}

// ---------------------------------------------------------------- 5

fn select_k_blobs() -> Check {
    let mut hits = 0;
    let mut chosen = Vec::new();
    for seed in 0..10u64 {
        let mut rng = seeded_rng(100 + seed);
        // centres 20 apart, spread ±1
        let centres = [[0.0, 0.0], [20.0, 0.0], [10.0, 17.0]];
        let pts: Vec<Vec<f64>> = (0..60)
            .map(|i| centres[i % 3].iter().map(|c| c + rng.random_range(-1.0..1.0)).collect())
            .collect();
        let (k, _) = select_k(&pts, 2..=8, &KMeansParams { seed, ..KMeansParams::default() }).map_err(e2s)?;
        chosen.push(k);
        hits += usize::from(k == 3);
    }
    ensure(hits == 10, || format!("chosen K per seed: {chosen:?}"))?;
    Ok("K = 3 on 10/10 seeds".into())
}

// ---------------------------------------------------------------- 6

fn entropy_assignment() -> Check {
    let (chosen, e) = entropy_choice(&[0.8, 0.2], AssignRule::MinEntropy);
    ensure((e[0] - 0.1785).abs() < 5e-5 && (e[1] - 0.3219).abs() < 5e-5, || format!("e = {e:?}"))?;
    ensure(chosen == 0, || format!("chose topic {}", chosen + 1))?;

    let spec = SyntheticSpec { n_themes: 3, ..SyntheticSpec::default() };
    let (recs, dict) = generate_synthetic(&spec).map_err(e2s)?;
    let docs: Vec<TokenStream> = recs
        .iter()
        .map(|r| tokenize(&r.record.request_text, &WhitespaceTokenizer))
        .collect();
    let vocab = build_vocabulary(&docs, 1).map_err(e2s)?;
    let emb = cbow_train(&docs, &vocab, &CbowConfig { dim: 50, seed: 1, ..CbowConfig::default() }).map_err(e2s)?;
    let lv = label_vectors_from_names(dict.names(), &emb, &WhitespaceTokenizer);
    let pts: Vec<Vec<f64>> = lv.iter().map(|l| l.vector.clone()).collect();
    let o = optics(&pts, &OpticsParams { min_samples: 3, ..OpticsParams::default() }).map_err(e2s)?;
    let n_topics = o.require_clusters().map_err(e2s)?;
    let mut label_docs = vec![TokenStream::default(); dict.len()];
    for (d, r) in docs.iter().zip(&recs) {
        label_docs[r.canonical_label].tokens.extend(d.tokens.iter().cloned());
    }
    let topics = lda_fit(&label_docs, n_topics, &LdaParams::default()).map_err(e2s)?;
    let truth: Vec<usize> = (0..12).map(|c| spec.theme_of(c).unwrap()).collect();

    let literal = entropy_assign(&lv, &topics, &emb, AssignRule::MinEntropy).map_err(e2s)?;
    let mut worst_sum: f64 = 0.0;
    for a in &literal.assignments {
        let p = a.diagnostics.p.as_ref().ok_or("missing p")?;
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    ensure(worst_sum <= 1e-9, || format!("p sums off by {worst_sum:e}"))?;
    let literal_ari = adjusted_rand_index(&literal.meta_vector(), &truth);
    let map = build_meta_map(MetaInputs::TopicEntropy {
        labels: &lv,
        topics: &topics,
        emb: &emb,
        rule: AssignRule::MaxProb,
    })
    .map_err(e2s)?;
    let ari = adjusted_rand_index(&map.meta_vector(), &truth);
    ensure(ari > 0.9, || format!("ARI {ari:.3} (min-entropy rule {literal_ari:.3})"))?;
    Ok(format!(
        "e = ({:.4}, {:.4}) -> topic 1; p sums within {worst_sum:.0e}; ARI {ari:.3} with assign = max_prob \
         ({n_topics} topics; literal min-entropy rule ARI {literal_ari:.3})",
        e[0], e[1]
    ))
}

// ---------------------------------------------------------------- 7

fn gradient_checks() -> Check {
    let mut parts = Vec::new();
    for t in [
        GradTarget::Dense,
        GradTarget::Conv,
        GradTarget::BatchNorm,
        GradTarget::Pool,
        GradTarget::ResidualAdd,
        GradTarget::ResidualBlock,
        GradTarget::Mlp,
        GradTarget::SoftmaxCe,
    ] {
        let r = gradient_check(t, 7);
        ensure(r.max_rel_error < 1e-4 && r.n_checked > 0, || {
            format!("{t:?}: max relative error {:e} over {} entries", r.max_rel_error, r.n_checked)
        })?;
        parts.push(format!("{t:?} {:.1e}", r.max_rel_error));
    }
    Ok(parts.join(", "))
}

// ---------------------------------------------------------------- 8

fn architecture(run: &E2e) -> Check {
    let cnn = NeuralModel::rescnn(&ResCnnConfig::default(), (100, 100), &[0, 1, 2], 0);
    let shapes = cnn
        .stage_shapes(&Features::Dense(vec![0.1; 100 * 100]))
        .map_err(e2s)?;
    let trace: Vec<usize> = shapes.iter().map(|s| s[2]).collect();
    ensure(trace == [100, 100, 50, 25, 13, 7], || format!("trace {trace:?}"))?;
    ensure(shapes.iter().all(|s| s[2] == s[3]), || format!("non-square stage output {shapes:?}"))?;

    let mlp = NeuralModel::mlp(&MlpConfig::default(), 10_000, &(0..12).collect::<Vec<_>>(), 0);
    let dense = mlp.dense_shapes();
    ensure(dense == [(10_000, 512), (512, 128), (128, 12)], || format!("MLP shapes {dense:?}"))?;

    let h = run.hierarchy("hier-mlp")?;
    let width = match &h.meta_model {
        ClassifierModel::Mlp(m) => m.output_width(),
        other => return Err(format!("meta model is {}", other.kind_name())),
    };
    ensure(width == h.k(), || format!("meta-MLP width {width}, K = {}", h.k()))?;
    Ok(format!("trace {trace:?}; MLP {dense:?}; meta-MLP width {width} = K"))
}

// ---------------------------------------------------------------- 9

fn random_subset(n: usize, len: usize, classes: usize, seed: u64) -> InMemorySet {
    let mut rng = seeded_rng(seed);
    let feats = (0..n)
        .map(|_| Features::Dense((0..len).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    InMemorySet::new(feats, (0..n).map(|i| i % classes).collect())
}

fn memorization() -> Check {
    let cfg = TrainConfig {
        epochs: 500,
        target_loss: Some(0.01),
        ..TrainConfig::default()
    };
    let data = random_subset(32, 10_000, 4, 1);
    let mut mlp = NeuralModel::mlp(&MlpConfig::default(), 10_000, &[0, 1, 2, 3], 0);
    let mlp_trace = mlp.train(&data, &data.labels.clone(), &cfg).map_err(e2s)?;
    let mlp_last = *mlp_trace.last().unwrap();
    ensure(mlp_last < 0.01, || format!("MLP loss {mlp_last} after {} epochs", mlp_trace.len()))?;

    // channel widths divided by 8 keep the run within the time budget
    let data = random_subset(32, 100 * 100, 4, 2);
    let mut cnn = NeuralModel::rescnn(&ResCnnConfig::scaled(8), (100, 100), &[0, 1, 2, 3], 0);
    let cnn_trace = cnn.train(&data, &data.labels.clone(), &cfg).map_err(e2s)?;
    let cnn_last = *cnn_trace.last().unwrap();
    ensure(cnn_last < 0.01, || format!("ResCNN loss {cnn_last} after {} epochs", cnn_trace.len()))?;
    Ok(format!(
        "MLP (full 512/128 widths) loss {mlp_last:.4} after {} epochs; ResCNN (1/8 channels, 100x100) loss {cnn_last:.4} after {} epochs",
        mlp_trace.len(),
        cnn_trace.len()
    ))
}

// ---------------------------------------------------------------- 10

const CONFIG: &str = r#"
seed = 1
out_dir = "run"
[paths]
corpus = "corpus.jsonl"
dictionary = "labels.tsv"
[embed]
max_len = 32
[embed.cbow]
dim = 32
epochs = 20
[cluster]
k_max = 6
[cluster.optics]
min_samples = 3
[cluster.lda]
iterations = 200
[train.mlp]
hidden = [64, 32]
[train.rescnn]
stem_channels = 4
head = "pool"
stages = [
  { channels = 4, blocks = 1, stride = 1 },
  { channels = 8, blocks = 2, stride = 2 },
  { channels = 16, blocks = 2, stride = 2 },
  { channels = 32, blocks = 2, stride = 2 },
  { channels = 64, blocks = 2, stride = 2 },
]
[train.optimizer]
epochs = 20
lr = 0.003
[train.rescnn_optimizer]
epochs = 5
lr = 0.003
"#;

struct E2e {
    dir: tempfile::TempDir,
    ok: bool,
    log: String,
}

impl E2e {
    fn run() -> E2e {
        let dir = tempfile::tempdir().expect("temp dir");
        let bin = env!("CARGO_BIN_EXE_hybridclf");
        let mut log = String::new();
        let mut ok = true;
        std::fs::write(dir.path().join("run.toml"), CONFIG).expect("write config");
        for args in [
            vec![
                "synth",
                "--corpus",
                "corpus.jsonl",
                "--dictionary",
                "labels.tsv",
                "--classes",
                "12",
                "--samples",
                "2000",
                "--themes",
                "3",
            ],
            vec!["--config", "run.toml", "run"],
        ] {
            let out = Command::new(bin).current_dir(dir.path()).args(&args).output().expect("spawn");
            log.push_str(&String::from_utf8_lossy(&out.stdout));
            if !out.status.success() {
                log.push_str(&String::from_utf8_lossy(&out.stderr));
                ok = false;
                break;
            }
        }
        E2e { dir, ok, log }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn require(&self) -> Result<(), String> {
        ensure(self.ok, || format!("pipeline failed: {}", self.log.trim()))
    }

    fn config(&self) -> Result<RunConfig, String> {
        RunConfig::load(&self.path().join("run.toml")).map_err(e2s)
    }

    fn hierarchy(&self, kind: &str) -> Result<HierarchicalModel, String> {
        self.require()?;
        let cfg = self.config()?;
        let prep = Prepared::load(&cfg, &mut StageRecorder::detached(&cfg.out_dir, "acceptance")).map_err(e2s)?;
        let kind: hybridclf::classifiers::ModelKind = kind.parse().map_err(e2s)?;
        let emb = if kind.uses_sparse_features() {
            None
        } else {
            Some(
                hybridclf::features::EmbeddingMatrix::load(&cfg.stage_dir("embed").join("embeddings.txt"))
                    .map_err(e2s)?,
            )
        };
        let hash = feature_hash(kind, &prep.vocab, emb.as_ref());
        load_hierarchy(&cfg.stage_dir("train").join(kind.as_str()), Some(&hash)).map_err(e2s)
    }
}

fn end_to_end(run: &E2e) -> Check {
    run.require()?;
    let read = |p: PathBuf| -> Result<Value, String> {
        serde_json::from_str(&std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?).map_err(e2s)
    };
    let summary = read(run.path().join("run/evaluate/summary.json"))?;
    read(run.path().join("run/evaluate/decision.json"))?;
    let baseline = summary["majority_baseline"].as_f64().ok_or("no baseline")?;
    let rows = summary["rows"].as_array().ok_or("no rows")?;
    let kinds: Vec<&str> = rows.iter().filter_map(|r| r["model"].as_str()).collect();
    ensure(kinds == ["nb", "hier-nb", "mlp", "hier-mlp", "rescnn"], || format!("models {kinds:?}"))?;
    let mut parts = Vec::new();
    for r in rows {
        let (p, rc) = (r["micro_precision"].as_f64().unwrap(), r["micro_recall"].as_f64().unwrap());
        let name = r["model"].as_str().unwrap();
        ensure(p > 3.0 * baseline, || format!("{name}: micro P {p:.3} vs baseline {baseline:.3}"))?;
        ensure((p - rc).abs() < 1e-12, || format!("{name}: micro P {p} != micro R {rc}"))?;
        parts.push(format!("{name} {p:.3}"));
    }
    let winner = summary["decision"]["winner"].as_str().unwrap_or("?");
    Ok(format!(
        "5 models, decision `{winner}`; micro P = micro R: {} (3x baseline = {:.3})",
        parts.join(", "),
        3.0 * baseline
    ))
}

// ---------------------------------------------------------------- 11

fn ensemble_selection() -> Check {
    let reports = [("a", 1.5), ("b", 1.2), ("c", 2.0)]
        .iter()
        .map(|&(id, ll)| {
            let mut r = compute_metrics(&[0, 1], &[0, 1], 2).unwrap();
            r.model_id = id.into();
            r.log_loss = Some(ll);
            r.dataset_hash = Some("validation".into());
            r
        })
        .collect::<Vec<_>>();
    let d = select_best(&reports).map_err(e2s)?;
    ensure(d.winner_index == 1, || format!("picked {}", d.winner_index))?;
    Ok(format!("losses (1.5, 1.2, 2.0) -> index {} (`{}`)", d.winner_index, d.winner))
}

// ---------------------------------------------------------------- 12

fn log_loss_values() -> Check {
    let uniform = log_loss(&[0, 1, 2, 3], &vec![vec![0.25; 4]; 4], 1e-7).map_err(e2s)?;
    ensure((uniform - 2.2493).abs() < 1e-4, || format!("uniform loss {uniform}"))?;
    let sharp = vec![vec![0.998, 0.001, 0.001], vec![0.0, 1.0, 0.0], vec![0.0005, 0.0005, 0.999]];
    let near = log_loss(&[0, 1, 2], &sharp, 1e-7).map_err(e2s)?;
    ensure(near < 0.01, || format!("near one-hot loss {near}"))?;
    Ok(format!("uniform 4-class {uniform:.4}; near one-hot {near:.5}"))
}

// ---------------------------------------------------------------- 13

/// Meta model that knows the true meta-class of every sample (read from a
/// tag feature appended to the sample).
struct PerfectGate {
    truth: HashMap<usize, usize>,
    classes: Vec<usize>,
}

const TAG: usize = 1 << 40;

impl Predictor for PerfectGate {
    fn classes(&self) -> &[usize] {
        &self.classes
    }

    fn predict_proba_batch(&self, xs: &[&Features]) -> hybridclf::Result<Vec<Vec<f64>>> {
        Ok(xs
            .iter()
            .map(|x| {
                let Features::Sparse(f) = x else { unreachable!() };
                let id = f.iter().find(|e| e.0 >= TAG).unwrap().0 - TAG;
                let mut p = vec![0.0; self.classes.len()];
                p[self.truth[&id]] = 1.0;
                p
            })
            .collect())
    }
}

/// A real leaf model that never sees the tag.
struct Untagged<'a>(&'a ClassifierModel);

impl Predictor for Untagged<'_> {
    fn classes(&self) -> &[usize] {
        self.0.classes()
    }

    fn predict_proba_batch(&self, xs: &[&Features]) -> hybridclf::Result<Vec<Vec<f64>>> {
        let clean: Vec<Features> = xs
            .iter()
            .map(|x| match x {
                Features::Sparse(f) => Features::Sparse(f.iter().copied().filter(|e| e.0 < TAG).collect()),
                other => (*other).clone(),
            })
            .collect();
        self.0.predict_proba_batch(&clean.iter().collect::<Vec<_>>())
    }
}

fn hierarchy_invariants(run: &E2e) -> Check {
    run.require()?;
    let mut rng = seeded_rng(2024);
    let mut checked = 0;
    for kind in ["hier-nb", "hier-mlp"] {
        let h = run.hierarchy(kind)?;
        let xs: Vec<Features> = match &h.meta_model {
            ClassifierModel::Nb(m) => (0..10_000)
                .map(|_| {
                    let mut ids: Vec<usize> = (0..rng.random_range(1..20)).map(|_| rng.random_range(0..m.n_features)).collect();
                    ids.sort_unstable();
                    ids.dedup();
                    Features::Sparse(ids.into_iter().map(|i| (i, 1.0)).collect())
                })
                .collect(),
            ClassifierModel::Mlp(m) => (0..10_000)
                .map(|_| Features::Dense((0..m.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect()))
                .collect(),
            other => return Err(format!("unexpected meta model {}", other.kind_name())),
        };
        let refs: Vec<&Features> = xs.iter().collect();
        for p in infer_cascade(&h, &refs).map_err(e2s)? {
            ensure(h.map.meta_of(p.label) == p.meta, || {
                format!("{kind}: label {} outside meta-class {}", p.label, p.meta)
            })?;
            checked += 1;
        }
    }

    // perfect meta gate on the test shard of the hier-nb run
    let h = run.hierarchy("hier-nb")?;
    let cfg = run.config()?;
    let prep = Prepared::load(&cfg, &mut StageRecorder::detached(&cfg.out_dir, "acceptance")).map_err(e2s)?;
    let test = prep.test(&cfg).map_err(e2s)?;
    let encoder = encoder_for(hybridclf::classifiers::ModelKind::HierNb, &cfg, &prep, None);
    let mut xs = Vec::new();
    let mut truth = HashMap::new();
    for (n, &i) in test.iter().enumerate() {
        let Features::Sparse(mut f) = encoder.encode(&prep.tokens[i]) else { unreachable!() };
        f.push((TAG + n, 1.0));
        xs.push(Features::Sparse(f));
        truth.insert(n, h.map.meta_of(prep.label(i)));
    }
    let gate = PerfectGate {
        truth,
        classes: (0..h.k()).collect(),
    };
    let leaves: Vec<Untagged> = h.leaf_models.iter().map(Untagged).collect();
    let leaf_refs: Vec<&dyn Predictor> = leaves.iter().map(|l| l as &dyn Predictor).collect();
    let refs: Vec<&Features> = xs.iter().collect();
    let preds = cascade_with(&gate, &leaf_refs, &refs).map_err(e2s)?;
    let labels: Vec<usize> = test.iter().map(|&i| prep.label(i)).collect();
    let cascade_acc = preds.iter().zip(&labels).filter(|(p, &y)| p.label == y).count() as f64 / labels.len() as f64;

    // Σ_m (n_m / n) · accuracy of leaf m on its own samples
    let mut identity = 0.0;
    for m in 0..h.k() {
        let own: Vec<usize> = (0..labels.len()).filter(|&n| h.map.meta_of(labels[n]) == m).collect();
        if own.is_empty() {
            continue;
        }
        let sub: Vec<&Features> = own.iter().map(|&n| &xs[n]).collect();
        let proba = leaves[m].predict_proba_batch(&sub).map_err(e2s)?;
        let hits = own
            .iter()
            .zip(&proba)
            .filter(|(&n, p)| leaves[m].classes()[argmax(p)] == labels[n])
            .count();
        identity += own.len() as f64 / labels.len() as f64 * (hits as f64 / own.len() as f64);
    }
    let diff = (cascade_acc - identity).abs();
    ensure(diff <= 1e-12, || format!("cascade {cascade_acc} vs leaf-weighted {identity}"))?;
    Ok(format!(
        "{checked} random cascades stay in their meta-class; perfect gate: cascade {cascade_acc:.4} = leaf-weighted {identity:.4} (diff {diff:.0e})"
    ))
}

// ---------------------------------------------------------------- 14

fn determinism(run: &E2e) -> Check {
    run.require()?;
    let bin = env!("CARGO_BIN_EXE_hybridclf");
    for stage in ["prepare", "embed", "cluster"] {
        let out = Command::new(bin)
            .current_dir(run.path())
            .args(["--config", "run.toml", "--out", "rerun", stage])
            .output()
            .map_err(e2s)?;
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    }
    let hashes = |root: &str, stage: &str| -> Result<Vec<(String, String)>, String> {
        let p = run.path().join(root).join(stage).join("manifest.json");
        let m: Value = serde_json::from_str(&std::fs::read_to_string(&p).map_err(e2s)?).map_err(e2s)?;
        Ok(m["artifacts"]
            .as_array()
            .ok_or("no artifacts")?
            .iter()
            .map(|a| (a["path"].as_str().unwrap().to_string(), a["sha256"].as_str().unwrap().to_string()))
            .collect())
    };
    let mut n = 0;
    for stage in ["prepare", "embed", "cluster"] {
        let (a, b) = (hashes("run", stage)?, hashes("rerun", stage)?);
        ensure(!a.is_empty() && a == b, || format!("{stage}: {a:?} != {b:?}"))?;
        n += a.len();
    }
    Ok(format!("{n} artifacts of prepare/embed/cluster reproduced byte for byte"))
}

// ----------------------------------------------------------------

fn main() {
    let started = Instant::now();
    let mut results: Vec<(usize, &str, Check, f64)> = Vec::new();
    let mut run_check = |n: usize, name: &'static str, f: &dyn Fn() -> Check| {
        let t = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match &r {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => ("FAIL", d.clone()),
        };
        println!("[{tag}] {n:>2} {name}: {detail} ({secs:.1}s)");
        results.push((n, name, r, secs));
    };

    run_check(1, "tf-idf oracle", &tfidf_oracle);
    run_check(2, "woe/iv oracle", &woe_oracle);
    run_check(3, "naive bayes oracle", &nb_oracle);
    run_check(4, "em monotonicity", &gmm_monotone);
    run_check(5, "model selection", &select_k_blobs);
    run_check(6, "entropy assignment", &entropy_assignment);
    run_check(7, "gradient checks", &gradient_checks);
    let e2e = E2e::run();
    run_check(8, "architecture fidelity", &|| architecture(&e2e));
    run_check(9, "memorization", &memorization);
    run_check(10, "end-to-end pipeline", &|| end_to_end(&e2e));
    run_check(11, "ensemble selection", &ensemble_selection);
    run_check(12, "log loss", &log_loss_values);
    run_check(13, "hierarchy invariants", &|| hierarchy_invariants(&e2e));
    run_check(14, "determinism", &|| determinism(&e2e));

    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0}s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
