//! The three classifier families: Bernoulli naive Bayes over sparse token
//! features, a fully connected network and a residual CNN over dense
//! sequence tensors.
//!
//! Neural layers are hand-written over `ndarray` in `f64` so that every
//! kernel can be checked against finite differences ([`gradient_check`]).
//! All families expose the same [`Predictor`] interface, whose output
//! columns are the *global* class ids listed by [`Predictor::classes`].

mod gradcheck;
mod layers;
mod model;
mod nb;
mod network;
mod persist;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport, GradTarget};
pub use layers::{
    same_padding, softmax_cross_entropy, softmax_rows, BatchNorm2d, Conv2d, Dense, Flatten, GlobalAvgPool, Layer,
    Param, Relu, ResidualBlock, Sequential,
};
pub use model::{ClassifierModel, ConstantModel, FitConfig, InputSpec, ModelKind, Predictor};
pub use nb::{nb_fit, BernoulliNbModel, NbFeatureMode, NbParams};
pub use network::{
    Architecture, HeadKind, MlpConfig, MlpModel, NeuralModel, ResCnnConfig, ResCnnModel, StageSpec, TrainConfig,
};
pub use persist::{load_model, save_model, ModelHeader, ModelHashes, FORMAT_VERSION};

use serde::{Deserialize, Serialize};

/// Input representation of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Features {
    /// `(feature id, weight)` pairs; presence models ignore the weight.
    Sparse(Vec<(usize, f64)>),
    /// Flattened dense tensor (e.g. a sequence of embeddings).
    Dense(Vec<f64>),
}

/// Random access to labelled samples. Features may be materialised lazily.
pub trait SampleSet {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Global class id of sample `i`.
    fn label(&self, i: usize) -> usize;

    fn features(&self, i: usize) -> Features;
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InMemorySet {
    pub features: Vec<Features>,
    pub labels: Vec<usize>,
}

impl InMemorySet {
    pub fn new(features: Vec<Features>, labels: Vec<usize>) -> Self {
        assert_eq!(features.len(), labels.len(), "one label per sample");
        InMemorySet { features, labels }
    }
}

impl SampleSet for InMemorySet {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    fn features(&self, i: usize) -> Features {
        self.features[i].clone()
    }
}

/// A subset of another set, optionally with labels rewritten (e.g. leaf
/// labels mapped to their meta-class).
pub struct SubsetView<'a> {
    inner: &'a dyn SampleSet,
    indices: Vec<usize>,
    relabel: Option<&'a dyn Fn(usize) -> usize>,
}

impl<'a> SubsetView<'a> {
    pub fn new(inner: &'a dyn SampleSet, indices: Vec<usize>) -> Self {
        SubsetView {
            inner,
            indices,
            relabel: None,
        }
    }

    pub fn relabelled(inner: &'a dyn SampleSet, indices: Vec<usize>, relabel: &'a dyn Fn(usize) -> usize) -> Self {
        SubsetView {
            inner,
            indices,
            relabel: Some(relabel),
        }
    }
}

impl SampleSet for SubsetView<'_> {
    fn len(&self) -> usize {
        self.indices.len()
    }

    fn label(&self, i: usize) -> usize {
        let y = self.inner.label(self.indices[i]);
        self.relabel.map_or(y, |f| f(y))
    }

    fn features(&self, i: usize) -> Features {
        self.inner.features(self.indices[i])
    }
}

/// Distinct labels of `data`, ascending.
pub fn present_classes(data: &dyn SampleSet) -> Vec<usize> {
    let set: std::collections::BTreeSet<usize> = (0..data.len()).map(|i| data.label(i)).collect();
    set.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_view_relabels() {
        let data = InMemorySet::new(
            (0..4).map(|i| Features::Dense(vec![i as f64])).collect(),
            vec![0, 1, 2, 3],
        );
        let f = |y: usize| y / 2;
        let view = SubsetView::relabelled(&data, vec![3, 1], &f);
        assert_eq!(view.len(), 2);
        assert_eq!((view.label(0), view.label(1)), (1, 0));
        assert_eq!(view.features(0), Features::Dense(vec![3.0]));
        assert_eq!(present_classes(&view), vec![0, 1]);
    }
}
