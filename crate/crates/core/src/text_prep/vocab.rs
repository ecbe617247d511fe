use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::TokenStream;
use crate::error::{Error, Result};
use crate::util::sha256_hex;

/// Token ↔ id map with document and collection frequencies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
    df: Vec<usize>,
    cf: Vec<usize>,
    n_docs: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn df(&self, id: usize) -> usize {
        self.df[id]
    }

    pub fn cf(&self, id: usize) -> usize {
        self.cf[id]
    }

    /// Ids of the in-vocabulary tokens of `doc`, in order.
    pub fn encode(&self, doc: &TokenStream) -> Vec<usize> {
        doc.tokens.iter().filter_map(|t| self.id(t)).collect()
    }

    /// TSV: a `#docs=<N>` header, then `token<TAB>df<TAB>cf` in id order.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#docs={}\n", self.n_docs);
        for i in 0..self.len() {
            let _ = writeln!(out, "{}\t{}\t{}", self.tokens[i], self.df[i], self.cf[i]);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let n_docs = lines
            .next()
            .and_then(|(_, l)| l.strip_prefix("#docs="))
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| Error::MalformedRow {
                row: 1,
                message: "expected `#docs=<N>` header".into(),
            })?;
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            ids: HashMap::new(),
            df: Vec::new(),
            cf: Vec::new(),
            n_docs,
        };
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let bad = |m: &str| Error::MalformedRow {
                row: i + 1,
                message: m.to_string(),
            };
            let mut parts = line.split('\t');
            let (Some(tok), Some(df), Some(cf)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad("expected token, df and cf"));
            };
            let df: usize = df.parse().map_err(|_| bad("bad df"))?;
            let cf: usize = cf.parse().map_err(|_| bad("bad cf"))?;
            if vocab.ids.insert(tok.to_string(), vocab.tokens.len()).is_some() {
                return Err(bad("duplicate token"));
            }
            vocab.tokens.push(tok.to_string());
            vocab.df.push(df);
            vocab.cf.push(cf);
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_tsv().as_bytes())
    }
}

/// Build the vocabulary, keeping tokens with `df >= min_df`; ids follow
/// first appearance.
pub fn build_vocabulary(corpus: &[TokenStream], min_df: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::InvalidParameter("corpus is empty".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut counts: HashMap<&str, (usize, usize, usize)> = HashMap::new(); // (df, cf, last doc + 1)
    for (d, doc) in corpus.iter().enumerate() {
        for tok in &doc.tokens {
            let entry = counts.entry(tok.as_str()).or_insert_with(|| {
                order.push(tok.as_str());
                (0, 0, 0)
            });
            entry.1 += 1;
            if entry.2 != d + 1 {
                entry.0 += 1;
                entry.2 = d + 1;
            }
        }
    }
    let mut vocab = Vocabulary {
        tokens: Vec::new(),
        ids: HashMap::new(),
        df: Vec::new(),
        cf: Vec::new(),
        n_docs: corpus.len(),
    };
    for tok in order {
        let (df, cf, _) = counts[tok];
        if df >= min_df.max(1) {
            vocab.ids.insert(tok.to_string(), vocab.tokens.len());
            vocab.tokens.push(tok.to_string());
            vocab.df.push(df);
            vocab.cf.push(cf);
        }
    }
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary { min_df });
    }
    Ok(vocab)
}

/// token id → postings `(doc index, term count)` sorted by doc index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvertedIndex {
    pub postings: Vec<Vec<(usize, usize)>>,
    pub n_docs: usize,
}

impl InvertedIndex {
    pub fn collection_frequency(&self, id: usize) -> usize {
        self.postings[id].iter().map(|&(_, c)| c).sum()
    }
}

pub fn build_inverted_index(corpus: &[TokenStream], vocab: &Vocabulary) -> InvertedIndex {
    let mut postings: Vec<Vec<(usize, usize)>> = vec![Vec::new(); vocab.len()];
    for (d, doc) in corpus.iter().enumerate() {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for id in vocab.encode(doc) {
            *counts.entry(id).or_default() += 1;
        }
        for (id, c) in counts {
            postings[id].push((d, c));
        }
    }
    // docs are visited in order, so each list is already sorted
    InvertedIndex {
        postings,
        n_docs: corpus.len(),
    }
}

/// Inclusive collection-frequency range; `max = None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub min: usize,
    pub max: Option<usize>,
}

impl Bucket {
    pub fn new(min: usize, max: Option<usize>) -> Self {
        Bucket { min, max }
    }

    fn contains(&self, f: usize) -> bool {
        f >= self.min && self.max.is_none_or(|m| f <= m)
    }

    fn label(&self) -> String {
        match self.max {
            Some(m) if m == self.min => format!("{m}"),
            Some(m) => format!("{}-{m}", self.min),
            None => format!(">={}", self.min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub range: String,
    pub samples: usize,
}

/// For each bucket, the number of documents containing at least one token
/// whose collection frequency falls in that bucket.
pub fn frequency_histogram(index: &InvertedIndex, buckets: &[Bucket]) -> Result<Vec<HistogramBin>> {
    for (i, b) in buckets.iter().enumerate() {
        if b.min == 0 || b.max.is_some_and(|m| m < b.min) {
            return Err(Error::InvalidParameter(format!("bucket {} is empty or below 1", b.label())));
        }
        for other in &buckets[i + 1..] {
            let lo = b.min.max(other.min);
            let hi = match (b.max, other.max) {
                (Some(x), Some(y)) => x.min(y),
                (Some(x), None) | (None, Some(x)) => x,
                (None, None) => usize::MAX,
            };
            if lo <= hi {
                return Err(Error::OverlappingBuckets(format!("{} and {}", b.label(), other.label())));
            }
        }
    }
    let mut hits: Vec<Vec<bool>> = vec![vec![false; index.n_docs]; buckets.len()];
    for (id, list) in index.postings.iter().enumerate() {
        let cf = index.collection_frequency(id);
        if let Some(b) = buckets.iter().position(|b| b.contains(cf)) {
            for &(doc, _) in list {
                hits[b][doc] = true;
            }
        }
    }
    Ok(buckets
        .iter()
        .zip(hits)
        .map(|(b, h)| HistogramBin {
            range: b.label(),
            samples: h.into_iter().filter(|&x| x).count(),
        })
        .collect())
}
