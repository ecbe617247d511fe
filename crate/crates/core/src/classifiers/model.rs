use serde::{Deserialize, Serialize};

use super::nb::{nb_fit, BernoulliNbModel, NbParams};
use super::network::{MlpConfig, NeuralModel, ResCnnConfig, TrainConfig};
use super::{present_classes, Features, SampleSet};
use crate::error::{Error, Result};

/// Anything that maps features to a distribution over its classes.
pub trait Predictor: Send + Sync {
    /// Global class ids of the output columns, ascending.
    fn classes(&self) -> &[usize];

    fn predict_proba_batch(&self, xs: &[&Features]) -> Result<Vec<Vec<f64>>>;

    fn predict_proba(&self, x: &Features) -> Result<Vec<f64>> {
        Ok(self.predict_proba_batch(&[x])?.pop().unwrap())
    }
}

/// Always predicts the same distribution (used for a meta-class with a
/// single leaf label, or degenerate training sets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantModel {
    pub classes: Vec<usize>,
    pub proba: Vec<f64>,
}

impl ConstantModel {
    /// Class frequencies of `data` restricted to `classes`.
    pub fn from_frequencies(data: &dyn SampleSet, classes: &[usize]) -> Self {
        let mut counts = vec![0.0; classes.len()];
        for i in 0..data.len() {
            if let Ok(j) = classes.binary_search(&data.label(i)) {
                counts[j] += 1.0;
            }
        }
        let total: f64 = counts.iter().sum();
        let proba = if total > 0.0 {
            counts.iter().map(|c| c / total).collect()
        } else {
            vec![1.0 / classes.len() as f64; classes.len()]
        };
        ConstantModel {
            classes: classes.to_vec(),
            proba,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "nb")]
    Nb,
    #[serde(rename = "hier-nb")]
    HierNb,
    #[serde(rename = "mlp")]
    Mlp,
    #[serde(rename = "hier-mlp")]
    HierMlp,
    #[serde(rename = "rescnn")]
    ResCnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Nb, ModelKind::HierNb, ModelKind::Mlp, ModelKind::HierMlp, ModelKind::ResCnn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Nb => "nb",
            ModelKind::HierNb => "hier-nb",
            ModelKind::Mlp => "mlp",
            ModelKind::HierMlp => "hier-mlp",
            ModelKind::ResCnn => "rescnn",
        }
    }

    pub fn is_hierarchical(self) -> bool {
        matches!(self, ModelKind::HierNb | ModelKind::HierMlp)
    }

    /// The flat family used for each level of a hierarchy.
    pub fn base(self) -> ModelKind {
        match self {
            ModelKind::HierNb => ModelKind::Nb,
            ModelKind::HierMlp => ModelKind::Mlp,
            k => k,
        }
    }

    pub fn uses_sparse_features(self) -> bool {
        matches!(self.base(), ModelKind::Nb)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownFormat(format!("model kind `{s}`")))
    }
}

/// Everything a flat classifier needs to be trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub nb: NbParams,
    pub mlp: MlpConfig,
    pub rescnn: ResCnnConfig,
    pub train: TrainConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            nb: NbParams::default(),
            mlp: MlpConfig::default(),
            rescnn: ResCnnConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Shape information the families cannot infer from labels alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputSpec {
    /// Vocabulary size for sparse (NB) inputs.
    pub n_features: usize,
    /// `(rows, cols)` of the dense sequence input.
    pub sequence: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierModel {
    Nb(BernoulliNbModel),
    Mlp(NeuralModel),
    ResCnn(NeuralModel),
    Constant(ConstantModel),
}

impl ClassifierModel {
    /// Train one flat model over the classes present in `data`. Fewer than
    /// two classes yields a constant model.
    pub fn fit(kind: ModelKind, data: &dyn SampleSet, input: InputSpec, cfg: &FitConfig) -> Result<Self> {
        let classes = present_classes(data);
        if classes.is_empty() {
            return Err(Error::InvalidParameter("training set is empty".into()));
        }
        if classes.len() < 2 {
            log::warn!("only class {:?} present; using a constant predictor", classes);
            return Ok(ClassifierModel::Constant(ConstantModel::from_frequencies(data, &classes)));
        }
        let targets = || -> Vec<usize> {
            (0..data.len())
                .map(|i| classes.binary_search(&data.label(i)).unwrap())
                .collect()
        };
        match kind {
            ModelKind::Nb => Ok(ClassifierModel::Nb(nb_fit(data, &classes, input.n_features, &cfg.nb)?)),
            ModelKind::Mlp => {
                let (r, c) = input.sequence;
                let mut m = NeuralModel::mlp(&cfg.mlp, r * c, &classes, cfg.train.seed);
                m.train(data, &targets(), &cfg.train)?;
                Ok(ClassifierModel::Mlp(m))
            }
            ModelKind::ResCnn => {
                let mut m = NeuralModel::rescnn(&cfg.rescnn, input.sequence, &classes, cfg.train.seed);
                m.train(data, &targets(), &cfg.train)?;
                Ok(ClassifierModel::ResCnn(m))
            }
            k => Err(Error::InvalidParameter(format!("`{k}` is not a flat model kind"))),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ClassifierModel::Nb(_) => "nb",
            ClassifierModel::Mlp(_) => "mlp",
            ClassifierModel::ResCnn(_) => "rescnn",
            ClassifierModel::Constant(_) => "constant",
        }
    }

    pub fn loss_trace(&self) -> &[f64] {
        match self {
            ClassifierModel::Mlp(m) | ClassifierModel::ResCnn(m) => &m.loss_trace,
            _ => &[],
        }
    }
}

impl Predictor for ClassifierModel {
    fn classes(&self) -> &[usize] {
        match self {
            ClassifierModel::Nb(m) => &m.classes,
            ClassifierModel::Mlp(m) | ClassifierModel::ResCnn(m) => &m.classes,
            ClassifierModel::Constant(m) => &m.classes,
        }
    }

    fn predict_proba_batch(&self, xs: &[&Features]) -> Result<Vec<Vec<f64>>> {
        match self {
            ClassifierModel::Nb(m) => xs
                .iter()
                .map(|x| match x {
                    Features::Sparse(v) => Ok(m.predict_proba(v)),
                    Features::Dense(_) => Err(Error::ShapeMismatch {
                        expected: "sparse features".into(),
                        actual: "dense features".into(),
                    }),
                })
                .collect(),
            ClassifierModel::Mlp(m) | ClassifierModel::ResCnn(m) => {
                // bounded batches keep activation memory flat
                let mut out = Vec::with_capacity(xs.len());
                for chunk in xs.chunks(64) {
                    let p = m.predict_proba_batch(chunk)?;
                    out.extend(p.rows().into_iter().map(|r| r.to_vec()));
                }
                Ok(out)
            }
            ClassifierModel::Constant(m) => Ok(vec![m.proba.clone(); xs.len()]),
        }
    }
}
