//! Finite-difference verification of the hand-written backward passes.

use ndarray::{Array2, ArrayD};
use serde::Serialize;

use super::layers::{
    random_array, softmax_cross_entropy, BatchNorm2d, Conv2d, Dense, GlobalAvgPool, Layer, Relu, ResidualBlock,
    Sequential,
};
use crate::util::{seeded_rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradTarget {
    Dense,
    Conv,
    BatchNorm,
    Pool,
    /// Residual block with identity skip (checks the addition path).
    ResidualAdd,
    /// Residual block with strided 1×1 projection.
    ResidualBlock,
    Mlp,
    SoftmaxCe,
}

impl GradTarget {
    pub const ALL: [GradTarget; 8] = [
        GradTarget::Dense,
        GradTarget::Conv,
        GradTarget::BatchNorm,
        GradTarget::Pool,
        GradTarget::ResidualAdd,
        GradTarget::ResidualBlock,
        GradTarget::Mlp,
        GradTarget::SoftmaxCe,
    ];
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub target: GradTarget,
    pub max_rel_error: f64,
    pub n_checked: usize,
    pub n_params: usize,
}

enum Objective {
    /// `Σ r ⊙ y` for a fixed random `r`.
    Projection(ArrayD<f64>),
    CrossEntropy(Vec<usize>),
}

impl Objective {
    fn loss_and_grad(&self, y: &ArrayD<f64>) -> (f64, ArrayD<f64>) {
        match self {
            Objective::Projection(r) => ((r * y).sum(), r.clone()),
            Objective::CrossEntropy(t) => {
                let logits: Array2<f64> = y.clone().into_dimensionality().unwrap();
                let (l, g) = softmax_cross_entropy(&logits, t, 1e-300);
                (l, g.into_dyn())
            }
        }
    }
}

fn build(target: GradTarget, rng: &mut Rng) -> (Sequential, ArrayD<f64>, Objective) {
    let seq = |layers| Sequential { layers };
    let (net, x, out_shape): (Sequential, ArrayD<f64>, Vec<usize>) = match target {
        GradTarget::Dense => {
            let mut d = Dense::new(5, 4, rng);
            d.b.value = random_array(&[4], rng);
            (seq(vec![Layer::Dense(d)]), random_array(&[3, 5], rng), vec![3, 4])
        }
        GradTarget::Conv => {
            let mut c = Conv2d::new(2, 3, 3, 2, rng);
            c.b.value = random_array(&[3], rng);
            (seq(vec![Layer::Conv(c)]), random_array(&[2, 2, 5, 6], rng), vec![2, 3, 3, 3])
        }
        GradTarget::BatchNorm => {
            let mut bn = BatchNorm2d::new(3);
            bn.gamma.value = random_array(&[3], rng) + 1.5;
            bn.beta.value = random_array(&[3], rng);
            (seq(vec![Layer::BatchNorm(bn)]), random_array(&[3, 3, 2, 3], rng) * 2.0, vec![3, 3, 2, 3])
        }
        GradTarget::Pool => (
            seq(vec![Layer::Pool(GlobalAvgPool::default())]),
            random_array(&[2, 3, 4, 5], rng),
            vec![2, 3],
        ),
        GradTarget::ResidualAdd => (
            seq(vec![Layer::Residual(Box::new(ResidualBlock::new(2, 2, 1, rng)))]),
            random_array(&[3, 2, 4, 4], rng),
            vec![3, 2, 4, 4],
        ),
        GradTarget::ResidualBlock => (
            seq(vec![Layer::Residual(Box::new(ResidualBlock::new(2, 3, 2, rng)))]),
            random_array(&[3, 2, 5, 5], rng),
            vec![3, 3, 3, 3],
        ),
        GradTarget::Mlp => {
            // non-zero biases keep pre-activations off the ReLU kink at 0,
            // where central differences are meaningless
            let mut dense = |i, o| {
                let mut d = Dense::new(i, o, rng);
                d.b.value = random_array(&[o], rng) + 0.5;
                Layer::Dense(d)
            };
            let layers = vec![
                dense(6, 5),
                Layer::Relu(Relu::default()),
                dense(5, 4),
                Layer::Relu(Relu::default()),
                dense(4, 3),
            ];
            let t = vec![0, 2, 1, 2];
            return (seq(layers), random_array(&[4, 6], rng), Objective::CrossEntropy(t));
        }
        GradTarget::SoftmaxCe => {
            // no parameters: the input is the logits themselves
            return (seq(vec![]), random_array(&[4, 5], rng) * 3.0, Objective::CrossEntropy(vec![1, 0, 4, 4]));
        }
    };
    let r = random_array(&out_shape, rng);
    (net, x, Objective::Projection(r))
}

fn loss(net: &mut Sequential, x: &ArrayD<f64>, obj: &Objective) -> f64 {
    let y = net.forward(x);
    obj.loss_and_grad(&y).0
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps near-zero gradients
/// from turning rounding noise into large relative errors.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compare analytic and central-difference gradients for every trainable
/// parameter entry and every input entry of a tiny instance.
pub fn gradient_check(target: GradTarget, seed: u64) -> GradCheckReport {
    let mut rng = seeded_rng(seed);
    let (mut net, x, obj) = build(target, &mut rng);
    let eps = 1e-6;

    net.zero_grad();
    let y = net.forward(&x);
    let (_, dy) = obj.loss_and_grad(&y);
    let dx = net.backward(&dy);
    let analytic_params: Vec<Option<Vec<f64>>> = net
        .params()
        .iter()
        .map(|p| p.trainable.then(|| p.grad.iter().copied().collect()))
        .collect();

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let n_params = analytic_params.iter().flatten().map(Vec::len).sum();
    for (pi, analytic) in analytic_params.iter().enumerate() {
        let Some(analytic) = analytic else { continue };
        for (j, &a) in analytic.iter().enumerate() {
            let eval = |delta: f64, net: &mut Sequential| {
                net.params()[pi].value.as_slice_mut().unwrap()[j] += delta;
                let l = loss(net, &x, &obj);
                net.params()[pi].value.as_slice_mut().unwrap()[j] -= delta;
                l
            };
            let numeric = (eval(eps, &mut net) - eval(-eps, &mut net)) / (2.0 * eps);
            worst = worst.max(relative_error(a, numeric));
            checked += 1;
        }
    }
    let mut xp = x.clone();
    for j in 0..x.len() {
        let orig = xp.as_slice().unwrap()[j];
        xp.as_slice_mut().unwrap()[j] = orig + eps;
        let up = loss(&mut net, &xp, &obj);
        xp.as_slice_mut().unwrap()[j] = orig - eps;
        let down = loss(&mut net, &xp, &obj);
        xp.as_slice_mut().unwrap()[j] = orig;
        let numeric = (up - down) / (2.0 * eps);
        worst = worst.max(relative_error(dx.as_slice().unwrap()[j], numeric));
        checked += 1;
    }
    GradCheckReport {
        target,
        max_rel_error: worst,
        n_checked: checked,
        n_params,
    }
}
