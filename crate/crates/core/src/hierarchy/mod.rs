//! Two-level classification: a meta model picks one of K meta-classes and a
//! per-meta-class leaf model picks the label within it.
//!
//! Two inference strategies are offered. [`infer_cascade`] runs the meta
//! model and then only the selected leaf model (two evaluations per sample);
//! [`infer_max_prob`] runs all K leaf models and keeps the single most
//! probable label, which avoids propagating meta-level mistakes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifiers::{
    load_model, save_model, ClassifierModel, Features, FitConfig, InputSpec, ModelHashes, ModelKind, Predictor,
    SampleSet, SubsetView,
};
use crate::clustering::MetaClassMap;
use crate::error::{Error, Result};
use crate::util::argmax;

/// Which samples each leaf model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafMembership {
    /// Samples whose true label belongs to the meta-class.
    #[default]
    TrueMap,
    /// Samples the trained meta model routes to the meta-class (restricted
    /// to labels of that meta-class, so leaf outputs stay inside it).
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HierarchyConfig {
    pub fit: FitConfig,
    pub membership: LeafMembership,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalModel {
    /// The flat family used at both levels (`nb` or `mlp`).
    pub base: ModelKind,
    /// Outputs are meta-class ids.
    pub meta_model: ClassifierModel,
    /// `leaf_models[i]` outputs labels of meta-class `i`.
    pub leaf_models: Vec<ClassifierModel>,
    pub map: MetaClassMap,
    pub warnings: Vec<String>,
}

/// Label decision for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierPrediction {
    pub label: usize,
    pub meta: usize,
    pub probability: f64,
}

fn check_kind(kind: ModelKind) -> Result<ModelKind> {
    match kind.base() {
        ModelKind::Nb => Ok(ModelKind::Nb),
        ModelKind::Mlp => Ok(ModelKind::Mlp),
        _ => Err(Error::InvalidParameter(format!(
            "hierarchies are built from nb or mlp models, not `{kind}`"
        ))),
    }
}

/// Train one meta model and K leaf models.
pub fn train_hierarchical(
    kind: ModelKind,
    data: &dyn SampleSet,
    map: &MetaClassMap,
    input: InputSpec,
    cfg: &HierarchyConfig,
) -> Result<HierarchicalModel> {
    let base = check_kind(kind)?;
    map.validate()?;
    let k = map.k;
    let mut by_meta: Vec<Vec<usize>> = vec![Vec::new(); k];
    for i in 0..data.len() {
        let y = data.label(i);
        if y >= map.n_labels() {
            return Err(Error::InvalidParameter(format!("label {y} is not covered by the meta-class map")));
        }
        by_meta[map.meta_of(y)].push(i);
    }
    if let Some(empty) = by_meta.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass(empty));
    }

    let to_meta = |y: usize| map.meta_of(y);
    let all: Vec<usize> = (0..data.len()).collect();
    let meta_view = SubsetView::relabelled(data, all, &to_meta);
    log::info!("training {base} meta model over {k} meta-classes");
    let meta_model = ClassifierModel::fit(base, &meta_view, input, &cfg.fit)?;

    if cfg.membership == LeafMembership::Predicted {
        let routed = route(&meta_model, data)?;
        for (m, members) in by_meta.iter_mut().enumerate() {
            let picked: Vec<usize> = members.iter().copied().filter(|&i| routed[i] == m).collect();
            if picked.is_empty() {
                log::warn!("no samples routed to meta-class {m}; using its true members");
            } else {
                *members = picked;
            }
        }
    }

    let mut warnings = Vec::new();
    let mut leaf_models = Vec::with_capacity(k);
    for (m, members) in by_meta.into_iter().enumerate() {
        let view = SubsetView::new(data, members);
        let present = crate::classifiers::present_classes(&view);
        if present.len() < 2 {
            let w = format!("meta-class {m} has {} trained label(s); using a constant leaf", present.len());
            log::warn!("{w}");
            warnings.push(w);
        }
        log::info!("training {base} leaf model {m} ({} samples)", view.len());
        let mut fit = cfg.fit.clone();
        fit.train.seed = crate::util::derive_seed(cfg.fit.train.seed, &format!("leaf-{m}"));
        leaf_models.push(ClassifierModel::fit(base, &view, input, &fit)?);
    }
    Ok(HierarchicalModel {
        base,
        meta_model,
        leaf_models,
        map: map.clone(),
        warnings,
    })
}

/// Meta-class chosen for every sample of `data`.
fn route(meta: &dyn Predictor, data: &dyn SampleSet) -> Result<Vec<usize>> {
    let feats: Vec<Features> = (0..data.len()).map(|i| data.features(i)).collect();
    let refs: Vec<&Features> = feats.iter().collect();
    Ok(meta
        .predict_proba_batch(&refs)?
        .iter()
        .map(|p| meta.classes()[argmax(p)])
        .collect())
}

/// Cascade inference with explicit components, so the meta stage can be
/// replaced (e.g. by an oracle in tests).
pub fn cascade_with(meta: &dyn Predictor, leaves: &[&dyn Predictor], xs: &[&Features]) -> Result<Vec<HierPrediction>> {
    let meta_p = meta.predict_proba_batch(xs)?;
    let chosen: Vec<(usize, f64)> = meta_p
        .iter()
        .map(|p| {
            let j = argmax(p);
            (meta.classes()[j], p[j])
        })
        .collect();
    let mut out = vec![None; xs.len()];
    // one batched call per leaf keeps the evaluation count at two per sample
    for (m, leaf) in leaves.iter().enumerate() {
        let idx: Vec<usize> = (0..xs.len()).filter(|&i| chosen[i].0 == m).collect();
        if idx.is_empty() {
            continue;
        }
        let sub: Vec<&Features> = idx.iter().map(|&i| xs[i]).collect();
        for (&i, q) in idx.iter().zip(leaf.predict_proba_batch(&sub)?) {
            let j = argmax(&q);
            out[i] = Some(HierPrediction {
                label: leaf.classes()[j],
                meta: m,
                probability: chosen[i].1 * q[j],
            });
        }
    }
    out.into_iter()
        .map(|p| p.ok_or_else(|| Error::ModelFormat("meta model chose a meta-class without a leaf".into())))
        .collect()
}

/// Max-probability inference with explicit leaves: every leaf is evaluated
/// and the single most probable label wins; ties go to the lowest label.
pub fn max_prob_with(leaves: &[&dyn Predictor], xs: &[&Features]) -> Result<Vec<HierPrediction>> {
    let mut best: Vec<Option<HierPrediction>> = vec![None; xs.len()];
    for (m, leaf) in leaves.iter().enumerate() {
        for (i, q) in leaf.predict_proba_batch(xs)?.into_iter().enumerate() {
            for (j, &p) in q.iter().enumerate() {
                let label = leaf.classes()[j];
                let better = match best[i] {
                    None => true,
                    Some(b) => p > b.probability || (p == b.probability && label < b.label),
                };
                if better {
                    best[i] = Some(HierPrediction {
                        label,
                        meta: m,
                        probability: p,
                    });
                }
            }
        }
    }
    Ok(best.into_iter().map(|b| b.expect("at least one leaf")).collect())
}

impl HierarchicalModel {
    pub fn k(&self) -> usize {
        self.map.k
    }

    pub fn kind(&self) -> ModelKind {
        match self.base {
            ModelKind::Nb => ModelKind::HierNb,
            _ => ModelKind::HierMlp,
        }
    }

    fn leaves(&self) -> Vec<&dyn Predictor> {
        self.leaf_models.iter().map(|m| m as &dyn Predictor).collect()
    }

    /// Full distribution over all labels: `P(meta(y)) · P(y | leaf)`.
    /// Used for log loss; evaluates all K+1 models.
    pub fn predict_distribution(&self, xs: &[&Features]) -> Result<Vec<Vec<f64>>> {
        let n_labels = self.map.n_labels();
        let meta_p = self.meta_model.predict_proba_batch(xs)?;
        let mut out = vec![vec![0.0; n_labels]; xs.len()];
        for (m, leaf) in self.leaf_models.iter().enumerate() {
            let col = self.meta_model.classes().binary_search(&m).ok();
            let leaf_p = leaf.predict_proba_batch(xs)?;
            for (i, q) in leaf_p.iter().enumerate() {
                let pm = col.map_or(0.0, |c| meta_p[i][c]);
                for (j, &label) in leaf.classes().iter().enumerate() {
                    out[i][label] += pm * q[j];
                }
            }
        }
        Ok(out)
    }

    /// Meta-class decisions only.
    pub fn predict_meta(&self, xs: &[&Features]) -> Result<Vec<usize>> {
        Ok(self
            .meta_model
            .predict_proba_batch(xs)?
            .iter()
            .map(|p| self.meta_model.classes()[argmax(p)])
            .collect())
    }
}

pub fn infer_cascade(h: &HierarchicalModel, xs: &[&Features]) -> Result<Vec<HierPrediction>> {
    cascade_with(&h.meta_model, &h.leaves(), xs)
}

pub fn infer_max_prob(h: &HierarchicalModel, xs: &[&Features]) -> Result<Vec<HierPrediction>> {
    max_prob_with(&h.leaves(), xs)
}

/// On-disk description of a saved hierarchy; model files are relative to
/// the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyManifest {
    pub kind: ModelKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub meta_map: String,
    pub meta_map_hash: String,
    pub meta_model: String,
    pub leaf_models: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub const MANIFEST_FILE: &str = "hierarchy.json";

/// Write the meta-class map, K+1 model files and a manifest into `dir`.
/// Returns the written paths (manifest last).
pub fn save_hierarchy(dir: &Path, h: &HierarchicalModel, vocab_hash: Option<&str>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let map_hash = h.map.content_hash();
    let hashes = ModelHashes {
        vocab: vocab_hash.map(String::from),
        meta_map: Some(map_hash.clone()),
    };
    let mut written = Vec::new();
    let map_path = dir.join("meta_map.json");
    h.map.save(&map_path)?;
    written.push(map_path);
    save_model(&dir.join("meta.bin"), &h.meta_model, &hashes)?;
    written.push(dir.join("meta.bin"));
    let mut leaves = Vec::new();
    for (m, leaf) in h.leaf_models.iter().enumerate() {
        let name = format!("leaf-{m}.bin");
        save_model(&dir.join(&name), leaf, &hashes)?;
        written.push(dir.join(&name));
        leaves.push(name);
    }
    let manifest = HierarchyManifest {
        kind: h.kind(),
        k: h.k(),
        meta_map: "meta_map.json".into(),
        meta_map_hash: map_hash,
        meta_model: "meta.bin".into(),
        leaf_models: leaves,
        warnings: h.warnings.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// Load a hierarchy, checking the map file against the manifest and every
/// model against the map (and vocabulary, when given).
pub fn load_hierarchy(dir: &Path, vocab_hash: Option<&str>) -> Result<HierarchicalModel> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: HierarchyManifest = serde_json::from_str(&text)?;
    let map = MetaClassMap::load(&dir.join(&manifest.meta_map))?;
    let found = map.content_hash();
    if found != manifest.meta_map_hash {
        return Err(Error::HashMismatch {
            what: "meta-class map".into(),
            expected: manifest.meta_map_hash,
            found,
        });
    }
    if manifest.leaf_models.len() != map.k || manifest.k != map.k {
        return Err(Error::ModelFormat("leaf model count differs from K".into()));
    }
    let hashes = ModelHashes {
        vocab: vocab_hash.map(String::from),
        meta_map: Some(found),
    };
    let (meta_model, _) = load_model(&dir.join(&manifest.meta_model), &hashes)?;
    let leaf_models = manifest
        .leaf_models
        .iter()
        .map(|f| load_model(&dir.join(f), &hashes).map(|(m, _)| m))
        .collect::<Result<Vec<_>>>()?;
    Ok(HierarchicalModel {
        base: check_kind(manifest.kind)?,
        meta_model,
        leaf_models,
        map,
        warnings: manifest.warnings,
    })
}

#[cfg(test)]
mod tests;
