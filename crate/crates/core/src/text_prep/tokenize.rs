use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

/// Tokens of one record, with optional part-of-speech tags aligned to them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos_tags: Option<Vec<String>>,
}

impl TokenStream {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenStream {
            tokens,
            pos_tags: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for TokenStream {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenStream::new(iter.into_iter().map(Into::into).collect())
    }
}

/// A segmentation strategy. Implementations must be deterministic and emit
/// tokens made only of word characters.
pub trait TokenizerPlugin: Send + Sync {
    fn tokenize(&self, text: &str) -> TokenStream;
}

pub fn tokenize(text: &str, tokenizer: &dyn TokenizerPlugin) -> TokenStream {
    tokenizer.tokenize(text)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn word_runs(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !is_word_char(c)).filter(|s| !s.is_empty())
}

/// Splits on every non-word character.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl TokenizerPlugin for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> TokenStream {
        word_runs(text).collect()
    }
}

/// Dictionary-based segmentation by greedy longest match.
///
/// Multi-word lexicon entries (`new york`) merge consecutive word runs into
/// one token joined by `_`. Inside a run, forward maximum matching splits
/// on lexicon entries; characters not covered by any entry are kept together
/// as one token.
#[derive(Debug, Clone, Default)]
pub struct LexiconTokenizer {
    /// First word of each multi-word entry → remaining words, longest first.
    phrases: HashMap<String, Vec<Vec<String>>>,
    words: HashSet<String>,
    max_chars: usize,
}

impl LexiconTokenizer {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut lex = LexiconTokenizer::default();
        for entry in entries {
            let parts: Vec<String> = word_runs(entry.as_ref()).map(String::from).collect();
            match parts.len() {
                0 => {}
                1 => {
                    lex.max_chars = lex.max_chars.max(parts[0].chars().count());
                    lex.words.insert(parts[0].clone());
                }
                _ => lex
                    .phrases
                    .entry(parts[0].clone())
                    .or_default()
                    .push(parts[1..].to_vec()),
            }
        }
        for tails in lex.phrases.values_mut() {
            tails.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
            tails.dedup();
        }
        lex
    }

    pub fn len(&self) -> usize {
        self.words.len() + self.phrases.values().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn segment_run(&self, run: &str, out: &mut Vec<String>) {
        if self.words.contains(run) || self.words.is_empty() {
            out.push(run.to_string());
            return;
        }
        let chars: Vec<char> = run.chars().collect();
        let mut unknown = String::new();
        let mut i = 0;
        while i < chars.len() {
            let longest = (1..=self.max_chars.min(chars.len() - i))
                .rev()
                .find(|&len| {
                    let cand: String = chars[i..i + len].iter().collect();
                    self.words.contains(&cand)
                });
            match longest {
                Some(len) => {
                    if !unknown.is_empty() {
                        out.push(std::mem::take(&mut unknown));
                    }
                    out.push(chars[i..i + len].iter().collect());
                    i += len;
                }
                None => {
                    unknown.push(chars[i]);
                    i += 1;
                }
            }
        }
        if !unknown.is_empty() {
            out.push(unknown);
        }
    }
}

impl TokenizerPlugin for LexiconTokenizer {
    fn tokenize(&self, text: &str) -> TokenStream {
        let runs: Vec<&str> = word_runs(text).collect();
        let mut out = Vec::with_capacity(runs.len());
        let mut i = 0;
        while i < runs.len() {
            let merged = self.phrases.get(runs[i]).and_then(|tails| {
                tails.iter().find(|tail| {
                    tail.iter()
                        .enumerate()
                        .all(|(k, w)| runs.get(i + 1 + k) == Some(&w.as_str()))
                })
            });
            match merged {
                Some(tail) => {
                    out.push(runs[i..=i + tail.len()].join("_"));
                    i += tail.len() + 1;
                }
                None => {
                    self.segment_run(runs[i], &mut out);
                    i += 1;
                }
            }
        }
        TokenStream::new(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &TokenStream) -> Vec<&str> {
        s.tokens.iter().map(String::as_str).collect()
    }

    #[test]
    fn whitespace_split() {
        let s = tokenize("water pipe burst", &WhitespaceTokenizer);
        assert_eq!(toks(&s), ["water", "pipe", "burst"]);
        let s = tokenize("  pipe, burst!  again\t", &WhitespaceTokenizer);
        assert_eq!(toks(&s), ["pipe", "burst", "again"]);
    }

    #[test]
    fn empty_text_gives_empty_stream() {
        assert!(tokenize("", &WhitespaceTokenizer).is_empty());
        assert!(tokenize("", &LexiconTokenizer::new(["ab"])).is_empty());
    }

    #[test]
    fn greedy_longest_match() {
        let lex = LexiconTokenizer::new(["ab", "abc", "d"]);
        assert_eq!(toks(&tokenize("abcd", &lex)), ["abc", "d"]);
    }

    #[test]
    fn unmatched_characters_stay_together() {
        let lex = LexiconTokenizer::new(["water"]);
        assert_eq!(toks(&tokenize("waterfall", &lex)), ["water", "fall"]);
        assert_eq!(toks(&tokenize("pipe", &lex)), ["pipe"]);
    }

    #[test]
    fn han_text_segments_by_lexicon() {
        let lex = LexiconTokenizer::new(["自来水", "公司", "水管"]);
        assert_eq!(toks(&tokenize("自来水公司水管破裂", &lex)), ["自来水", "公司", "水管", "破裂"]);
    }

    #[test]
    fn multi_word_entries_merge() {
        let lex = LexiconTokenizer::new(["water bureau", "water bureau north", "pipe"]);
        assert_eq!(
            toks(&tokenize("call the water bureau north now", &lex)),
            ["call", "the", "water_bureau_north", "now"]
        );
        assert_eq!(toks(&tokenize("water bureau", &lex)), ["water_bureau"]);
        assert_eq!(toks(&tokenize("water", &lex)), ["water"]);
    }

    #[test]
    fn tokens_contain_only_word_characters() {
        let lex = LexiconTokenizer::new(["a b", "cd"]);
        for text in ["a b, cd!", "x--y", "(a) b.cd"] {
            for plugin in [&lex as &dyn TokenizerPlugin, &WhitespaceTokenizer] {
                for t in tokenize(text, plugin).tokens {
                    assert!(!t.is_empty());
                    assert!(t.chars().all(is_word_char), "{t:?}");
                }
            }
        }
    }
}
