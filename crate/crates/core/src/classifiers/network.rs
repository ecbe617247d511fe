use ndarray::{Array2, ArrayD, IxDyn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::layers::{
    softmax_cross_entropy, softmax_rows, Conv2d, Dense, Flatten, GlobalAvgPool, Layer, Param, Relu, ResidualBlock,
    Sequential,
};
use super::{Features, SampleSet};
use crate::error::{Error, Result};
use crate::util::{derive_seed, seeded_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Probabilities are clipped to at least this inside the loss.
    pub clip: f64,
    /// Stop early once an epoch's mean loss falls below this.
    pub target_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            clip: 1e-7,
            target_loss: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidParameter("step size must be positive".into()));
        }
        if !(self.clip > 0.0 && self.clip <= 1e-2) {
            return Err(Error::InvalidParameter("probability clip must lie in (0, 1e-2]".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidParameter("moment decay rates must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden: vec![512, 128] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub channels: usize,
    pub blocks: usize,
    /// Stride of the stage's first block.
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Global average pooling, then dense.
    #[default]
    Pool,
    /// Flatten the final feature maps, then dense.
    Flatten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResCnnConfig {
    pub stem_channels: usize,
    pub stages: Vec<StageSpec>,
    pub head: HeadKind,
}

impl Default for ResCnnConfig {
    /// The 20-layer reference layout: a 32-channel stem, then stages of
    /// 32×1, 64×2, 128×2, 256×2 and 512×2 blocks.
    fn default() -> Self {
        let stage = |channels, blocks, stride| StageSpec { channels, blocks, stride };
        ResCnnConfig {
            stem_channels: 32,
            stages: vec![stage(32, 1, 1), stage(64, 2, 2), stage(128, 2, 2), stage(256, 2, 2), stage(512, 2, 2)],
            head: HeadKind::Pool,
        }
    }
}

impl ResCnnConfig {
    /// Same layout with every channel count divided by `factor` (min 1).
    pub fn scaled(factor: usize) -> Self {
        let mut c = ResCnnConfig::default();
        c.stem_channels = (c.stem_channels / factor).max(1);
        for s in &mut c.stages {
            s.channels = (s.channels / factor).max(1);
        }
        c
    }

    /// Spatial side after the stem and after each stage, for a square input.
    pub fn spatial_trace(&self, side: usize) -> Vec<usize> {
        let mut trace = vec![side];
        let mut s = side;
        for st in &self.stages {
            s = s.div_ceil(st.stride);
            trace.push(s);
        }
        trace
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Mlp(MlpConfig),
    ResCnn(ResCnnConfig),
}

/// A trained (or freshly initialised) MLP or residual CNN together with the
/// mapping of its output units to global class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModel {
    pub arch: Architecture,
    pub net: Sequential,
    /// Per-sample input shape: `[features]` or `[1, H, W]`.
    pub input_shape: Vec<usize>,
    pub classes: Vec<usize>,
    pub loss_trace: Vec<f64>,
    /// Layer index after which each ResCNN stage ends (empty for MLPs).
    stage_ends: Vec<usize>,
}

pub type MlpModel = NeuralModel;
pub type ResCnnModel = NeuralModel;

fn output_layer(input: usize, classes: &[usize]) -> Layer {
    Layer::Dense(Dense::zeros(input, classes.len()))
}

impl NeuralModel {
    pub fn mlp(cfg: &MlpConfig, input_dim: usize, classes: &[usize], seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let mut layers = Vec::new();
        let mut width = input_dim;
        for &h in &cfg.hidden {
            layers.push(Layer::Dense(Dense::new(width, h, &mut rng)));
            layers.push(Layer::Relu(Relu::default()));
            width = h;
        }
        layers.push(output_layer(width, classes));
        NeuralModel {
            arch: Architecture::Mlp(cfg.clone()),
            net: Sequential { layers },
            input_shape: vec![input_dim],
            classes: classes.to_vec(),
            loss_trace: Vec::new(),
            stage_ends: Vec::new(),
        }
    }

    pub fn rescnn(cfg: &ResCnnConfig, input_hw: (usize, usize), classes: &[usize], seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let mut layers = vec![Layer::Conv(Conv2d::new(1, cfg.stem_channels, 3, 1, &mut rng))];
        let mut stage_ends = vec![0];
        let mut c = cfg.stem_channels;
        let (mut h, mut w) = input_hw;
        for st in &cfg.stages {
            for b in 0..st.blocks {
                let stride = if b == 0 { st.stride } else { 1 };
                layers.push(Layer::Residual(Box::new(ResidualBlock::new(c, st.channels, stride, &mut rng))));
                c = st.channels;
                h = h.div_ceil(stride);
                w = w.div_ceil(stride);
            }
            stage_ends.push(layers.len() - 1);
        }
        let head_in = match cfg.head {
            HeadKind::Pool => {
                layers.push(Layer::Pool(GlobalAvgPool::default()));
                c
            }
            HeadKind::Flatten => {
                layers.push(Layer::Flatten(Flatten::default()));
                c * h * w
            }
        };
        layers.push(output_layer(head_in, classes));
        NeuralModel {
            arch: Architecture::ResCnn(cfg.clone()),
            net: Sequential { layers },
            input_shape: vec![1, input_hw.0, input_hw.1],
            classes: classes.to_vec(),
            loss_trace: Vec::new(),
            stage_ends,
        }
    }

    /// Rebuild an untrained network of the same shape (used when loading).
    pub fn rebuild(arch: &Architecture, input_shape: &[usize], classes: &[usize]) -> Result<Self> {
        match (arch, input_shape) {
            (Architecture::Mlp(c), [d]) => Ok(NeuralModel::mlp(c, *d, classes, 0)),
            (Architecture::ResCnn(c), [1, h, w]) => Ok(NeuralModel::rescnn(c, (*h, *w), classes, 0)),
            _ => Err(Error::ModelFormat(format!("input shape {input_shape:?} does not fit the architecture"))),
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn n_trainable(&mut self) -> usize {
        self.net.n_trainable()
    }

    /// Weight shapes of the dense layers, in order.
    pub fn dense_shapes(&self) -> Vec<(usize, usize)> {
        self.net
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Dense(d) => Some((d.input_dim(), d.output_dim())),
                _ => None,
            })
            .collect()
    }

    pub fn output_width(&self) -> usize {
        self.classes.len()
    }

    fn batch_input(&self, xs: &[&Features]) -> Result<ArrayD<f64>> {
        let len = self.input_len();
        let mut buf = Vec::with_capacity(xs.len() * len);
        for x in xs {
            match x {
                Features::Dense(v) if v.len() == len => buf.extend_from_slice(v),
                Features::Dense(v) => {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{len} inputs"),
                        actual: format!("{} inputs", v.len()),
                    })
                }
                Features::Sparse(_) => {
                    return Err(Error::ShapeMismatch {
                        expected: "dense features".into(),
                        actual: "sparse features".into(),
                    })
                }
            }
        }
        let mut shape = vec![xs.len()];
        shape.extend_from_slice(&self.input_shape);
        Ok(ArrayD::from_shape_vec(IxDyn(&shape), buf).unwrap())
    }

    /// Class probabilities (inference mode) for a batch.
    pub fn predict_proba_batch(&self, xs: &[&Features]) -> Result<Array2<f64>> {
        if xs.is_empty() {
            return Ok(Array2::zeros((0, self.classes.len())));
        }
        let x = self.batch_input(xs)?;
        let logits = self.net.infer(&x).into_dimensionality().expect("logits are rank 2");
        Ok(softmax_rows(&logits))
    }

    /// Activation shapes after the stem and after each stage (ResCNN only).
    pub fn stage_shapes(&self, x: &Features) -> Result<Vec<Vec<usize>>> {
        let mut h = self.batch_input(&[x])?;
        let mut shapes = Vec::new();
        for (i, l) in self.net.layers.iter().enumerate() {
            h = l.infer(&h);
            if self.stage_ends.contains(&i) {
                shapes.push(h.shape().to_vec());
            }
            if Some(&i) == self.stage_ends.last() {
                break;
            }
        }
        Ok(shapes)
    }

    /// Mini-batch Adam on softmax cross-entropy. `targets[i]` is the local
    /// output index for sample `i` of `data`. Returns the per-epoch mean loss.
    pub fn train(&mut self, data: &dyn SampleSet, targets: &[usize], cfg: &TrainConfig) -> Result<Vec<f64>> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::InvalidParameter("training set is empty".into()));
        }
        if targets.len() != data.len() {
            return Err(Error::LengthMismatch(targets.len(), data.len()));
        }
        let mut rng = seeded_rng(derive_seed(cfg.seed, "shuffle"));
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut step = 0i32;
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let feats: Vec<Features> = batch.iter().map(|&i| data.features(i)).collect();
                let refs: Vec<&Features> = feats.iter().collect();
                let x = self.batch_input(&refs)?;
                let t: Vec<usize> = batch.iter().map(|&i| targets[i]).collect();
                self.net.zero_grad();
                let logits = self.net.forward(&x).into_dimensionality().expect("logits are rank 2");
                let (loss, dlogits) = softmax_cross_entropy(&logits, &t, cfg.clip);
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch, loss });
                }
                total += loss * batch.len() as f64;
                self.net.backward(&dlogits.into_dyn());
                step += 1;
                adam_step(self.net.params(), cfg, step);
            }
            let mean = total / data.len() as f64;
            log::debug!("epoch {epoch}: loss {mean:.6}");
            self.loss_trace.push(mean);
            if cfg.target_loss.is_some_and(|t| mean < t) {
                break;
            }
        }
        Ok(self.loss_trace.clone())
    }
}

pub(crate) fn adam_step(params: Vec<&mut Param>, cfg: &TrainConfig, step: i32) {
    let bc1 = 1.0 - cfg.beta1.powi(step);
    let bc2 = 1.0 - cfg.beta2.powi(step);
    for p in params.into_iter().filter(|p| p.trainable) {
        ndarray::Zip::from(&mut p.value)
            .and(&p.grad)
            .and(&mut p.m)
            .and(&mut p.v)
            .for_each(|w, &g, m, v| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *w -= cfg.lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.adam_eps);
            });
    }
}
