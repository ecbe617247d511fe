use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::TokenStream;
use crate::error::{Error, Result};

pub type StopWords = HashSet<String>;

/// Read a one-entry-per-line word list; `#` starts a comment.
pub fn load_word_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_word_list(&text))
}

pub(crate) fn parse_word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

/// The script a corpus is written in; letters from any other script mark a
/// token as foreign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Script {
    Latin,
    Han,
}

impl Script {
    fn contains(self, c: char) -> bool {
        let u = c as u32;
        match self {
            Script::Latin => c.is_ascii_alphabetic() || (0x00C0..=0x024F).contains(&u),
            Script::Han => {
                (0x4E00..=0x9FFF).contains(&u)
                    || (0x3400..=0x4DBF).contains(&u)
                    || (0xF900..=0xFAFF).contains(&u)
                    || (0x20000..=0x2A6DF).contains(&u)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropClasses {
    pub digits: bool,
    pub punctuation: bool,
    /// Native script; `None` disables the foreign-word rule.
    pub foreign_script: Option<Script>,
    /// POS tags to drop when the tokenizer supplies tags (verb, adjective,
    /// adverb in the LTP tag set).
    pub pos_drop: Vec<String>,
}

impl Default for DropClasses {
    fn default() -> Self {
        DropClasses {
            digits: true,
            punctuation: true,
            foreign_script: Some(Script::Latin),
            pos_drop: vec!["v".into(), "a".into(), "d".into()],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub stop: usize,
    pub digits: usize,
    pub foreign: usize,
    pub punctuation: usize,
    pub pos: usize,
    pub pos_filter_applied: bool,
}

impl FilterStats {
    pub fn merge(&mut self, other: &FilterStats) {
        self.stop += other.stop;
        self.digits += other.digits;
        self.foreign += other.foreign;
        self.punctuation += other.punctuation;
        self.pos += other.pos;
        self.pos_filter_applied |= other.pos_filter_applied;
    }
}

/// Remove stop words and tokens with digits, punctuation or foreign-script
/// letters. POS-based drops only happen when `stream` carries tags.
pub fn filter_tokens(
    stream: &TokenStream,
    stops: &StopWords,
    drop: &DropClasses,
) -> (TokenStream, FilterStats) {
    let mut stats = FilterStats {
        pos_filter_applied: stream.pos_tags.is_some(),
        ..FilterStats::default()
    };
    let mut tokens = Vec::with_capacity(stream.tokens.len());
    let mut tags = stream.pos_tags.as_ref().map(|_| Vec::new());
    for (i, token) in stream.tokens.iter().enumerate() {
        let tag = stream.pos_tags.as_ref().and_then(|t| t.get(i));
        if token.is_empty() {
            continue;
        }
        if stops.contains(token) {
            stats.stop += 1;
        } else if drop.digits && token.chars().any(|c| c.is_numeric()) {
            stats.digits += 1;
        } else if drop.punctuation
            && token
                .chars()
                .any(|c| c.is_ascii_punctuation() || (!c.is_alphanumeric() && c != '_'))
        {
            stats.punctuation += 1;
        } else if drop
            .foreign_script
            .is_some_and(|s| token.chars().any(|c| c.is_alphabetic() && !s.contains(c)))
        {
            stats.foreign += 1;
        } else if tag.is_some_and(|t| drop.pos_drop.contains(t)) {
            stats.pos += 1;
        } else {
            tokens.push(token.clone());
            if let (Some(out), Some(t)) = (tags.as_mut(), tag) {
                out.push(t.clone());
            }
        }
    }
    (
        TokenStream {
            tokens,
            pos_tags: tags,
        },
        stats,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(tokens: &[&str]) -> TokenStream {
        tokens.iter().copied().collect()
    }

    fn stops(words: &[&str]) -> StopWords {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn drops_stop_words_and_digits() {
        let (out, stats) = filter_tokens(
            &stream(&["the", "pipe", "42", "burst"]),
            &stops(&["the"]),
            &DropClasses::default(),
        );
        assert_eq!(out.tokens, ["pipe", "burst"]);
        assert_eq!((stats.stop, stats.digits), (1, 1));
    }

    #[test]
    fn all_stop_words_give_empty_stream() {
        let (out, stats) =
            filter_tokens(&stream(&["a", "the", "a"]), &stops(&["a", "the"]), &DropClasses::default());
        assert!(out.is_empty());
        assert_eq!(stats.stop, 3);
    }

    #[test]
    fn pos_rule_skipped_without_tags() {
        let s = stream(&["repair", "quickly"]);
        let (out, stats) = filter_tokens(&s, &StopWords::new(), &DropClasses::default());
        assert_eq!(out, s);
        assert!(!stats.pos_filter_applied);
        assert_eq!(stats.pos, 0);
    }

    #[test]
    fn pos_rule_applies_with_tags() {
        let s = TokenStream {
            tokens: vec!["pipe".into(), "repair".into(), "quickly".into()],
            pos_tags: Some(vec!["n".into(), "v".into(), "d".into()]),
        };
        let (out, stats) = filter_tokens(&s, &StopWords::new(), &DropClasses::default());
        assert_eq!(out.tokens, ["pipe"]);
        assert_eq!(out.pos_tags.unwrap(), ["n"]);
        assert!(stats.pos_filter_applied);
        assert_eq!(stats.pos, 2);
    }

    #[test]
    fn foreign_script_and_punctuation() {
        let drop = DropClasses::default();
        let (out, stats) = filter_tokens(
            &stream(&["pipe", "水管", "café", "don't", "x-ray"]),
            &StopWords::new(),
            &drop,
        );
        assert_eq!(out.tokens, ["pipe", "café"]);
        assert_eq!((stats.foreign, stats.punctuation), (1, 2));

        let han = DropClasses {
            foreign_script: Some(Script::Han),
            ..DropClasses::default()
        };
        let (out, _) = filter_tokens(&stream(&["水管", "pipe"]), &StopWords::new(), &han);
        assert_eq!(out.tokens, ["水管"]);
    }

    #[test]
    fn word_list_parsing_skips_comments() {
        assert_eq!(parse_word_list("# header\nthe\n\n  and # trailing\n#x\n"), ["the", "and"]);
    }

    proptest! {
        #[test]
        fn filtering_is_idempotent(tokens in proptest::collection::vec("[a-c0-9水.]{1,3}", 0..20)) {
            let s: TokenStream = tokens.iter().map(String::as_str).collect();
            let stops = stops(&["a", "bb"]);
            let drop = DropClasses::default();
            let (once, _) = filter_tokens(&s, &stops, &drop);
            let (twice, _) = filter_tokens(&once, &stops, &drop);
            prop_assert_eq!(once, twice);
        }
    }
}
