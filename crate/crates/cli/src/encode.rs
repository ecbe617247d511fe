//! Text → token stream → model features, shared by every stage.

use std::collections::HashSet;

use hybridclf::classifiers::{Features, NbFeatureMode, SampleSet};
use hybridclf::features::{embed_sequence, tfidf_transform, EmbeddingMatrix};
use hybridclf::text_prep::{
    filter_tokens, load_word_list, tokenize, DropClasses, FilterStats, LexiconTokenizer, StopWords, TokenStream,
    TokenizerPlugin, Vocabulary, WhitespaceTokenizer,
};

use crate::config::RunConfig;
use crate::error::CliError;

pub struct TextPipeline {
    tokenizer: Box<dyn TokenizerPlugin>,
    stops: StopWords,
    drop: DropClasses,
}

impl TextPipeline {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        let tokenizer: Box<dyn TokenizerPlugin> = match &cfg.paths.lexicon {
            Some(p) => Box::new(LexiconTokenizer::new(load_word_list(p)?)),
            None => Box::new(WhitespaceTokenizer),
        };
        let stops: HashSet<String> = match &cfg.paths.stop_words {
            Some(p) => load_word_list(p)?.into_iter().collect(),
            None => HashSet::new(),
        };
        Ok(TextPipeline {
            tokenizer,
            stops,
            drop: cfg.prepare.drop.clone(),
        })
    }

    pub fn tokenizer(&self) -> &dyn TokenizerPlugin {
        self.tokenizer.as_ref()
    }

    pub fn process(&self, text: &str) -> (TokenStream, FilterStats) {
        filter_tokens(&tokenize(text, self.tokenizer.as_ref()), &self.stops, &self.drop)
    }
}

pub enum Encoder<'a> {
    Sparse {
        vocab: &'a Vocabulary,
        mode: NbFeatureMode,
    },
    Sequence {
        emb: &'a EmbeddingMatrix,
        max_len: usize,
    },
}

impl Encoder<'_> {
    pub fn encode(&self, doc: &TokenStream) -> Features {
        match self {
            Encoder::Sparse {
                vocab,
                mode: NbFeatureMode::Onehot,
            } => {
                let mut ids = vocab.encode(doc);
                ids.sort_unstable();
                ids.dedup();
                Features::Sparse(ids.into_iter().map(|i| (i, 1.0)).collect())
            }
            Encoder::Sparse {
                vocab,
                mode: NbFeatureMode::Tfidf,
            } => Features::Sparse(tfidf_transform(doc, vocab).weights),
            Encoder::Sequence { emb, max_len } => {
                let t = embed_sequence(doc, emb, *max_len);
                Features::Dense(t.data.iter().copied().collect())
            }
        }
    }

    /// True when the document yields no usable features.
    pub fn is_empty(&self, doc: &TokenStream) -> bool {
        match self {
            Encoder::Sparse { vocab, .. } => vocab.encode(doc).is_empty(),
            Encoder::Sequence { emb, .. } => doc.tokens.iter().all(|t| emb.id(t).is_none()),
        }
    }
}

/// Documents encoded on demand.
pub struct EncodedSet<'a> {
    pub docs: Vec<&'a TokenStream>,
    pub labels: Vec<usize>,
    pub encoder: &'a Encoder<'a>,
}

impl SampleSet for EncodedSet<'_> {
    fn len(&self) -> usize {
        self.docs.len()
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    fn features(&self, i: usize) -> Features {
        self.encoder.encode(self.docs[i])
    }
}
