use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// The closed label space plus the rules used to map free-text department
/// descriptions onto it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelDictionary {
    canonical_names: Vec<String>,
    index: HashMap<String, usize>,
    aliases: BTreeMap<String, usize>,
    location_nouns: BTreeSet<String>,
}

impl LabelDictionary {
    pub fn new(
        canonical_names: Vec<String>,
        aliases: BTreeMap<String, usize>,
        location_nouns: BTreeSet<String>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(canonical_names.len());
        for (i, name) in canonical_names.iter().enumerate() {
            let name = collapse_ws(name);
            if name.is_empty() {
                return Err(Error::InvalidParameter(format!("canonical name {i} is empty")));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "duplicate canonical name {name:?}"
                )));
            }
        }
        for (alias, &target) in &aliases {
            if target >= canonical_names.len() {
                return Err(Error::InvalidParameter(format!(
                    "alias {alias:?} points at missing label {target}"
                )));
            }
        }
        Ok(LabelDictionary {
            canonical_names,
            index,
            aliases,
            location_nouns,
        })
    }

    pub fn len(&self) -> usize {
        self.canonical_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.canonical_names.is_empty()
    }

    pub fn name(&self, label: usize) -> &str {
        &self.canonical_names[label]
    }

    pub fn names(&self) -> &[String] {
        &self.canonical_names
    }

    pub fn aliases(&self) -> &BTreeMap<String, usize> {
        &self.aliases
    }

    pub fn location_nouns(&self) -> &BTreeSet<String> {
        &self.location_nouns
    }

    fn lookup(&self, text: &str) -> Option<usize> {
        self.aliases
            .get(text)
            .or_else(|| self.index.get(text))
            .copied()
    }

    /// Parse the sectioned TSV format (`#CANONICAL`, `#ALIAS`, `#LOCATION`).
    pub fn parse(text: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Canonical,
            Alias,
            Location,
        }
        let mut section = Section::None;
        let mut names = Vec::new();
        let mut raw_aliases = Vec::new();
        let mut locations = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let row = i + 1;
            let line = line.trim_end_matches('\r');
            match line.trim() {
                "#CANONICAL" => section = Section::Canonical,
                "#ALIAS" => section = Section::Alias,
                "#LOCATION" => section = Section::Location,
                "" => {}
                _ => match section {
                    Section::Canonical => names.push(line.trim().to_string()),
                    Section::Alias => {
                        let (variant, canonical) =
                            line.split_once('\t').ok_or_else(|| Error::MalformedRow {
                                row,
                                message: "alias line needs `variant<TAB>canonical`".into(),
                            })?;
                        raw_aliases.push((row, variant.trim().to_string(), canonical.trim().to_string()));
                    }
                    Section::Location => {
                        locations.insert(collapse_ws(line));
                    }
                    Section::None => {
                        return Err(Error::MalformedRow {
                            row,
                            message: "entry before any section header".into(),
                        })
                    }
                },
            }
        }
        let positions: HashMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut aliases = BTreeMap::new();
        for (row, variant, canonical) in raw_aliases {
            let target = *positions.get(canonical.as_str()).ok_or_else(|| Error::MalformedRow {
                row,
                message: format!("alias target {canonical:?} is not a canonical name"),
            })?;
            aliases.insert(variant, target);
        }
        LabelDictionary::new(names, aliases, locations)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("#CANONICAL\n");
        for name in &self.canonical_names {
            let _ = writeln!(out, "{name}");
        }
        out.push_str("#ALIAS\n");
        for (variant, &target) in &self.aliases {
            let _ = writeln!(out, "{variant}\t{}", self.canonical_names[target]);
        }
        out.push_str("#LOCATION\n");
        for noun in &self.location_nouns {
            let _ = writeln!(out, "{noun}");
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Strip location nouns from both ends of the token sequence.
fn strip_locations<'a>(mut tokens: &'a [&'a str], nouns: &[Vec<&str>]) -> &'a [&'a str] {
    loop {
        let before = tokens.len();
        for noun in nouns {
            if noun.len() < tokens.len() && tokens.starts_with(noun) {
                tokens = &tokens[noun.len()..];
            }
            if noun.len() < tokens.len() && tokens.ends_with(noun) {
                tokens = &tokens[..tokens.len() - noun.len()];
            }
        }
        if tokens.len() == before {
            return tokens;
        }
    }
}

/// Resolve a department description to a canonical label index.
///
/// The whole description is tried first, so canonical names and aliases
/// always resolve to themselves; otherwise location nouns are stripped from
/// the edges and the remainder is looked up through the alias map and then
/// the canonical names.
pub fn normalize_label(department_text: &str, dict: &LabelDictionary) -> Option<usize> {
    let text = collapse_ws(department_text);
    if text.is_empty() {
        return None;
    }
    if let Some(hit) = dict.lookup(&text) {
        return Some(hit);
    }
    let tokens: Vec<&str> = text.split(' ').collect();
    let nouns: Vec<Vec<&str>> = dict
        .location_nouns
        .iter()
        .map(|n| n.split(' ').collect())
        .collect();
    let stripped = strip_locations(&tokens, &nouns);
    if stripped.len() == tokens.len() {
        return None;
    }
    dict.lookup(&stripped.join(" "))
}
