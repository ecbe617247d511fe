use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::labels::LabelDictionary;
use super::records::{RawRecord, ValidRecord};
use crate::error::{Error, Result};
use crate::util::seeded_rng;

/// Parameters of a seeded synthetic corpus with power-law class sizes.
///
/// Class `c` draws tokens from its private vocabulary, from the vocabulary of
/// its theme (`c % n_themes`) when themes are enabled, and from a vocabulary
/// shared by every class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub n_samples: usize,
    pub vocab_per_class: usize,
    pub shared_vocab: usize,
    /// Class `c` (0-based) gets weight `(c + 1)^-imbalance_exponent`.
    pub imbalance_exponent: f64,
    pub doc_length_range: (usize, usize),
    pub seed: u64,
    pub n_themes: usize,
    pub theme_vocab: usize,
    pub shared_prob: f64,
    pub theme_prob: f64,
    /// Probability of emitting a stop word or a numeric token.
    pub noise_prob: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 12,
            n_samples: 2000,
            vocab_per_class: 30,
            shared_vocab: 40,
            imbalance_exponent: 0.5,
            doc_length_range: (8, 24),
            seed: 7,
            n_themes: 0,
            theme_vocab: 12,
            shared_prob: 0.2,
            theme_prob: 0.3,
            noise_prob: 0.0,
        }
    }
}

const CONSONANTS: &[u8] = b"bdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const LOCATIONS: &[&str] = &["north", "south", "east", "west", "central district"];
const NOISE: &[&str] = &["the", "and", "of", "42", "2019", "please"];
const GENERIC_TAGS: &[&str] = &["complaint", "inquiry", "report", "request"];

/// Deterministic pronounceable word for a global word id (letters only).
pub fn synthetic_word(id: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut n = id;
    let mut out = String::new();
    for _ in 0..3 {
        let syl = n % base;
        n /= base;
        out.push(CONSONANTS[syl / VOWELS.len()] as char);
        out.push(VOWELS[syl % VOWELS.len()] as char);
    }
    while n > 0 {
        let syl = n % base;
        n /= base;
        out.push(CONSONANTS[syl / VOWELS.len()] as char);
        out.push(VOWELS[syl % VOWELS.len()] as char);
    }
    out
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InfeasibleSpec(m));
        if self.n_classes < 2 {
            return fail(format!("n_classes = {} < 2", self.n_classes));
        }
        if self.n_samples < self.n_classes {
            return fail(format!(
                "n_samples = {} cannot cover {} classes",
                self.n_samples, self.n_classes
            ));
        }
        let (lo, hi) = self.doc_length_range;
        if lo == 0 || lo > hi {
            return fail(format!("doc_length_range ({lo}, {hi}) is empty or starts at 0"));
        }
        if self.vocab_per_class == 0 {
            return fail("vocab_per_class must be positive".into());
        }
        if self.n_themes > self.n_classes {
            return fail("more themes than classes".into());
        }
        if self.n_themes > 0 && self.theme_vocab == 0 {
            return fail("themes need a theme vocabulary".into());
        }
        for p in [self.shared_prob, self.theme_prob, self.noise_prob] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("probability {p} outside [0,1]"));
            }
        }
        if self.shared_prob + self.theme_prob + self.noise_prob >= 1.0 {
            return fail("token mixture leaves no mass for private words".into());
        }
        if !self.imbalance_exponent.is_finite() || self.imbalance_exponent < 0.0 {
            return fail("imbalance_exponent must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Class sizes by largest-remainder rounding of the power law, each ≥ 1.
    pub fn class_sizes(&self) -> Vec<usize> {
        let weights: Vec<f64> = (0..self.n_classes)
            .map(|c| ((c + 1) as f64).powf(-self.imbalance_exponent))
            .collect();
        let total: f64 = weights.iter().sum();
        let quotas: Vec<f64> = weights
            .iter()
            .map(|w| w / total * self.n_samples as f64)
            .collect();
        let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut rest = self.n_samples - sizes.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..self.n_classes).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &c in order.iter().cycle() {
            if rest == 0 {
                break;
            }
            sizes[c] += 1;
            rest -= 1;
        }
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let donor = (0..sizes.len()).max_by_key(|&c| (sizes[c], usize::MAX - c)).unwrap();
            sizes[donor] -= 1;
            sizes[empty] += 1;
        }
        sizes
    }

    pub fn theme_of(&self, class: usize) -> Option<usize> {
        (self.n_themes > 0).then(|| class % self.n_themes)
    }

    fn private_word(&self, class: usize, i: usize) -> String {
        synthetic_word(class * self.vocab_per_class + i)
    }

    fn theme_word(&self, theme: usize, i: usize) -> String {
        synthetic_word(self.n_classes * self.vocab_per_class + theme * self.theme_vocab + i)
    }

    fn shared_word(&self, i: usize) -> String {
        synthetic_word(
            self.n_classes * self.vocab_per_class + self.n_themes * self.theme_vocab + i,
        )
    }

    pub fn label_name(&self, class: usize) -> String {
        match self.theme_of(class) {
            Some(t) => format!("{} {}", self.theme_word(t, 0), self.private_word(class, 0)),
            None => self.private_word(class, 0),
        }
    }
}

/// Generate a labelled corpus and the matching label dictionary.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Vec<ValidRecord>, LabelDictionary)> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);

    let names: Vec<String> = (0..spec.n_classes).map(|c| spec.label_name(c)).collect();
    let aliases: BTreeMap<String, usize> = names
        .iter()
        .enumerate()
        .map(|(c, n)| (n.to_uppercase(), c))
        .collect();
    let locations: BTreeSet<String> = LOCATIONS.iter().map(|s| s.to_string()).collect();
    let dict = LabelDictionary::new(names.clone(), aliases, locations)?;

    let mut labels: Vec<usize> = spec
        .class_sizes()
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect();
    labels.shuffle(&mut rng);

    let (lo, hi) = spec.doc_length_range;
    let mut out = Vec::with_capacity(labels.len());
    for (i, &class) in labels.iter().enumerate() {
        let theme = spec.theme_of(class);
        let len = rng.random_range(lo..=hi);
        let mut tokens = Vec::with_capacity(len);
        for _ in 0..len {
            let r: f64 = rng.random();
            let word = if r < spec.noise_prob {
                NOISE[rng.random_range(0..NOISE.len())].to_string()
            } else if spec.shared_vocab > 0 && r < spec.noise_prob + spec.shared_prob {
                spec.shared_word(rng.random_range(0..spec.shared_vocab))
            } else if let Some(t) = theme.filter(|_| {
                r < spec.noise_prob + spec.shared_prob + spec.theme_prob
            }) {
                spec.theme_word(t, rng.random_range(0..spec.theme_vocab))
            } else {
                spec.private_word(class, rng.random_range(0..spec.vocab_per_class))
            };
            tokens.push(word);
        }

        let department = match rng.random_range(0..10) {
            0..=2 => format!("{} {}", LOCATIONS[rng.random_range(0..LOCATIONS.len())], names[class]),
            3 => names[class].to_uppercase(),
            _ => names[class].clone(),
        };
        let cat1 = match theme {
            Some(t) => spec.theme_word(t, 1 % spec.theme_vocab),
            None => spec.private_word(class, 1 % spec.vocab_per_class),
        };
        let cat2 = GENERIC_TAGS[rng.random_range(0..GENERIC_TAGS.len())].to_string();
        let cat3 = rng
            .random_bool(0.5)
            .then(|| spec.private_word(class, 2 % spec.vocab_per_class));

        out.push(ValidRecord {
            record: RawRecord {
                id: format!("syn-{i:06}"),
                timestamp: format!(
                    "2019-{:02}-{:02}T{:02}:{:02}:00Z",
                    1 + (i / 2880) % 12,
                    1 + (i / 96) % 28,
                    (i / 4) % 24,
                    (i % 4) * 15
                ),
                categories: [Some(cat1), Some(cat2), cat3, None],
                request_text: tokens.join(" "),
                department_text: Some(department),
                invalid: false,
            },
            canonical_label: class,
        });
    }
    Ok((out, dict))
}
