use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus_io::ValidRecord;
use crate::error::{Error, Result};
use crate::text_prep::{tokenize, WhitespaceTokenizer};

/// Label × tag-combo sample counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagComboTable {
    /// `counts[label][combo]`
    pub counts: Vec<Vec<usize>>,
    pub combo_names: Vec<String>,
}

impl TagComboTable {
    pub fn n_labels(&self) -> usize {
        self.counts.len()
    }

    pub fn n_combos(&self) -> usize {
        self.combo_names.len()
    }
}

/// Order-preserving concatenation of the tokenized category tags. Empty
/// slots are skipped, so a record with no tags maps to the empty combo `""`.
pub fn combo_key(categories: &[Option<String>; 4]) -> String {
    categories
        .iter()
        .flatten()
        .map(|tag| tokenize(tag, &WhitespaceTokenizer).tokens.join(" "))
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("|")
}

/// Count samples per (label, combo). Combo columns follow first appearance.
pub fn build_tag_combo_table(records: &[ValidRecord], n_labels: usize) -> TagComboTable {
    let mut columns: HashMap<String, usize> = HashMap::new();
    let mut combo_names = Vec::new();
    let mut counts = vec![Vec::new(); n_labels];
    for r in records {
        let key = combo_key(&r.record.categories);
        let j = *columns.entry(key.clone()).or_insert_with(|| {
            combo_names.push(key);
            combo_names.len() - 1
        });
        for row in counts.iter_mut() {
            row.resize(combo_names.len(), 0);
        }
        counts[r.canonical_label][j] += 1;
    }
    TagComboTable { counts, combo_names }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WoeMode {
    /// WoE from the combo / non-combo distributions across labels.
    #[default]
    Percentage,
    /// `ln(TagCombo / Non-TagCombo)` on raw counts within each label.
    RawCount,
}

/// Rule-of-thumb predictive power bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IvStrength {
    Useless,
    Weak,
    Medium,
    Strong,
}

impl IvStrength {
    pub fn from_iv(iv: f64) -> Self {
        if iv <= 0.02 {
            IvStrength::Useless
        } else if iv <= 0.10 {
            IvStrength::Weak
        } else if iv <= 0.30 {
            IvStrength::Medium
        } else {
            IvStrength::Strong
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvReport {
    pub mode: WoeMode,
    pub epsilon: f64,
    pub combo_names: Vec<String>,
    /// `woe[label][combo]`
    pub woe: Vec<Vec<f64>>,
    pub iv_per_combo: Vec<f64>,
    pub strength: Vec<IvStrength>,
}

impl IvReport {
    pub fn count(&self, s: IvStrength) -> usize {
        self.strength.iter().filter(|&&x| x == s).count()
    }
}

/// Weight of evidence and information value of every tag combo.
///
/// For combo `j`, the "event" mass of label `i` is the number of its samples
/// carrying combo `j` and the "non-event" mass is the number carrying any
/// other combo. Zero cells are replaced by `epsilon`.
pub fn compute_woe_iv(table: &TagComboTable, epsilon: f64, mode: WoeMode) -> Result<IvReport> {
    let (n_labels, n_combos) = (table.n_labels(), table.n_combos());
    if n_labels < 2 || n_combos < 2 {
        return Err(Error::DegenerateTable(format!(
            "{n_labels} labels × {n_combos} combos; need at least 2 × 2"
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} must be > 0")));
    }
    let row_totals: Vec<usize> = table.counts.iter().map(|r| r.iter().sum()).collect();
    let smooth = |c: usize| if c == 0 { epsilon } else { c as f64 };

    let mut woe = vec![vec![0.0; n_combos]; n_labels];
    let mut iv_per_combo = Vec::with_capacity(n_combos);
    for j in 0..n_combos {
        let event: Vec<f64> = (0..n_labels).map(|i| smooth(table.counts[i][j])).collect();
        let non_event: Vec<f64> = (0..n_labels)
            .map(|i| smooth(row_totals[i] - table.counts[i][j]))
            .collect();
        let event_total: f64 = event.iter().sum();
        let non_event_total: f64 = non_event.iter().sum();
        let mut iv = 0.0;
        for i in 0..n_labels {
            let pe = event[i] / event_total;
            let pn = non_event[i] / non_event_total;
            let w = match mode {
                WoeMode::Percentage => (pe / pn).ln(),
                WoeMode::RawCount => (event[i] / non_event[i]).ln(),
            };
            woe[i][j] = w;
            iv += (pe - pn) * w;
        }
        iv_per_combo.push(iv);
    }
    Ok(IvReport {
        mode,
        epsilon,
        combo_names: table.combo_names.clone(),
        woe,
        strength: iv_per_combo.iter().map(|&iv| IvStrength::from_iv(iv)).collect(),
        iv_per_combo,
    })
}
