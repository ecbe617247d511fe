//! Tokenization, token filtering, vocabulary and inverted-index construction.

mod filter;
mod tokenize;
mod vocab;

pub use filter::{filter_tokens, load_word_list, DropClasses, FilterStats, Script, StopWords};
pub use tokenize::{tokenize, LexiconTokenizer, TokenStream, TokenizerPlugin, WhitespaceTokenizer};
pub use vocab::{
    build_inverted_index, build_vocabulary, frequency_histogram, Bucket, HistogramBin,
    InvertedIndex, Vocabulary,
};
