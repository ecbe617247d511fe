//! Layer kernels with hand-written backward passes.
//!
//! Activations are dynamic-rank arrays: `(N, features)` for dense layers and
//! `(N, C, H, W)` for convolutional ones. `forward` caches what `backward`
//! needs; `infer` is cache-free and uses running batch-norm statistics.

use ndarray::{Array2, Array4, ArrayD, Axis, Ix2, Ix4, IxDyn};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::util::Rng;

/// A tensor of weights with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
    pub(crate) m: ArrayD<f64>,
    pub(crate) v: ArrayD<f64>,
    /// Running statistics are stored as non-trainable params.
    pub trainable: bool,
}

impl Param {
    pub fn new(value: ArrayD<f64>, trainable: bool) -> Self {
        let z = ArrayD::zeros(value.raw_dim());
        Param {
            grad: z.clone(),
            m: z.clone(),
            v: z,
            value,
            trainable,
        }
    }

    pub fn zeros(shape: &[usize], trainable: bool) -> Self {
        Param::new(ArrayD::zeros(IxDyn(shape)), trainable)
    }

    /// He-normal initialisation with the given fan-in.
    pub fn he(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
        Param::new(ArrayD::from_shape_fn(IxDyn(shape), |_| normal.sample(rng)), true)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

fn as2(a: &ArrayD<f64>) -> ndarray::ArrayView2<'_, f64> {
    a.view().into_dimensionality::<Ix2>().expect("rank-2 tensor")
}

fn as4(a: &ArrayD<f64>) -> ndarray::ArrayView4<'_, f64> {
    a.view().into_dimensionality::<Ix4>().expect("rank-4 tensor")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
    x: Option<Array2<f64>>,
}

impl Dense {
    pub fn new(input: usize, output: usize, rng: &mut Rng) -> Self {
        Dense {
            w: Param::he(&[input, output], input, rng),
            b: Param::zeros(&[output], true),
            x: None,
        }
    }

    /// Output layer whose column for each class is drawn from its own
    /// stream, so relabelling classes permutes the initial weights.
    /// All-zero weights and biases. Used for output layers so that no class
    /// starts out favoured and relabelling classes permutes the outputs.
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            w: Param::zeros(&[input, output], true),
            b: Param::zeros(&[output], true),
            x: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.w.value.shape()[1]
    }

    fn compute(&self, x: &ndarray::ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = x.dot(&as2(&self.w.value));
        y += &self.b.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        y
    }

    fn forward(&mut self, x: &ArrayD<f64>) -> ArrayD<f64> {
        let x2 = as2(x);
        let y = self.compute(&x2);
        self.x = Some(x2.to_owned());
        y.into_dyn()
    }

    fn infer(&self, x: &ArrayD<f64>) -> ArrayD<f64> {
        self.compute(&as2(x)).into_dyn()
    }

    fn backward(&mut self, dy: &ArrayD<f64>) -> ArrayD<f64> {
        let dy = as2(dy);
        let x = self.x.as_ref().expect("forward before backward");
        let dw = x.t().dot(&dy);
        self.w.grad += &dw.into_dyn();
        self.b.grad += &dy.sum_axis(Axis(0)).into_dyn();
        dy.dot(&as2(&self.w.value).t()).into_dyn()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Relu {
    mask: Option<ArrayD<bool>>,
}

impl Relu {
    fn forward(&mut self, x: &ArrayD<f64>) -> ArrayD<f64> {
        self.mask = Some(x.mapv(|v| v > 0.0));
        x.mapv(|v| v.max(0.0))
    }

    fn backward(&mut self, dy: &ArrayD<f64>) -> ArrayD<f64> {
        let mask = self.mask.as_ref().expect("forward before backward");
        let mut dx = dy.clone();
        ndarray::Zip::from(&mut dx).and(mask).for_each(|d, &m| {
            if !m {
                *d = 0.0
            }
        });
        dx
    }
}

/// "Same" padding geometry: `out = ceil(in / stride)`, any odd remainder
/// of padding goes after the input.
pub fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `(C_out, C_in, k, k)`
    pub w: Param,
    pub b: Param,
    pub stride: usize,
    x: Option<Array4<f64>>,
}

struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    ho: usize,
    wo: usize,
    pad_h: usize,
    pad_w: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.n * self.ho * self.wo
    }

    /// Input coordinate for an output position and kernel offset.
    #[inline]
    fn src(&self, o: usize, kk: usize, pad: usize, limit: usize) -> Option<usize> {
        let i = (o * self.s + kk).checked_sub(pad)?;
        (i < limit).then_some(i)
    }
}

impl Conv2d {
    pub fn new(c_in: usize, c_out: usize, kernel: usize, stride: usize, rng: &mut Rng) -> Self {
        Conv2d {
            w: Param::he(&[c_out, c_in, kernel, kernel], c_in * kernel * kernel, rng),
            b: Param::zeros(&[c_out], true),
            stride,
            x: None,
        }
    }

    pub fn c_out(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.w.value.shape()[2]
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel();
        (same_padding(h, k, self.stride).0, same_padding(w, k, self.stride).0)
    }

    fn geometry(&self, x: &ndarray::ArrayView4<'_, f64>) -> Geometry {
        let (n, c, h, w) = x.dim();
        let k = self.kernel();
        let (ho, pad_h) = same_padding(h, k, self.stride);
        let (wo, pad_w) = same_padding(w, k, self.stride);
        Geometry {
            n,
            c,
            h,
            w,
            k,
            s: self.stride,
            ho,
            wo,
            pad_h,
            pad_w,
        }
    }

    fn im2col(g: &Geometry, x: &ndarray::ArrayView4<'_, f64>) -> Array2<f64> {
        let mut cols = Array2::zeros((g.rows(), g.cols()));
        let x = x.as_standard_layout();
        let xs = x.as_slice().unwrap();
        let plane = g.ho * g.wo;
        for c in 0..g.c {
            for ki in 0..g.k {
                for kj in 0..g.k {
                    let r = (c * g.k + ki) * g.k + kj;
                    let mut row = cols.row_mut(r);
                    let row = row.as_slice_mut().unwrap();
                    for n in 0..g.n {
                        let base = (n * g.c + c) * g.h * g.w;
                        for oh in 0..g.ho {
                            let Some(ih) = g.src(oh, ki, g.pad_h, g.h) else { continue };
                            let dst = n * plane + oh * g.wo;
                            for ow in 0..g.wo {
                                if let Some(iw) = g.src(ow, kj, g.pad_w, g.w) {
                                    row[dst + ow] = xs[base + ih * g.w + iw];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(g: &Geometry, cols: &Array2<f64>) -> Array4<f64> {
        let mut dx = Array4::<f64>::zeros((g.n, g.c, g.h, g.w));
        let out = dx.as_slice_mut().unwrap();
        let plane = g.ho * g.wo;
        for c in 0..g.c {
            for ki in 0..g.k {
                for kj in 0..g.k {
                    let r = (c * g.k + ki) * g.k + kj;
                    let row = cols.row(r);
                    let row = row.as_slice().unwrap();
                    for n in 0..g.n {
                        let base = (n * g.c + c) * g.h * g.w;
                        for oh in 0..g.ho {
                            let Some(ih) = g.src(oh, ki, g.pad_h, g.h) else { continue };
                            let src = n * plane + oh * g.wo;
                            for ow in 0..g.wo {
                                if let Some(iw) = g.src(ow, kj, g.pad_w, g.w) {
                                    out[base + ih * g.w + iw] += row[src + ow];
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn wmat(&self) -> ndarray::ArrayView2<'_, f64> {
        let c_out = self.c_out();
        self.w
            .value
            .view()
            .into_shape_with_order((c_out, self.w.value.len() / c_out))
            .unwrap()
    }

    fn compute(&self, x: &ndarray::ArrayView4<'_, f64>) -> Array4<f64> {
        let g = self.geometry(x);
        let cols = Self::im2col(&g, x);
        let out = self.wmat().dot(&cols); // (C_out, N*Ho*Wo)
        let b = self.b.value.as_slice().unwrap();
        let mut y = Array4::zeros((g.n, self.c_out(), g.ho, g.wo));
        let plane = g.ho * g.wo;
        for co in 0..self.c_out() {
            let src = out.row(co);
            let src = src.as_slice().unwrap();
            for n in 0..g.n {
                let mut dst = y.slice_mut(ndarray::s![n, co, .., ..]);
                let dst = dst.as_slice_mut().unwrap();
                for (d, s) in dst.iter_mut().zip(&src[n * plane..(n + 1) * plane]) {
                    *d = s + b[co];
                }
            }
        }
        y
    }

    fn forward(&mut self, x: &ArrayD<f64>) -> ArrayD<f64> {
        let x4 = as4(x);
        let y = self.compute(&x4);
        self.x = Some(x4.to_owned());
        y.into_dyn()
    }

    fn infer(&self, x: &ArrayD<f64>) -> ArrayD<f64> {
        self.compute(&as4(x)).into_dyn()
    }

    fn backward(&mut self, dy: &ArrayD<f64>) -> ArrayD<f64> {
        let x = self.x.take().expect("forward before backward");
        let g = self.geometry(&x.view());
        let dy = as4(dy);
        let plane = g.ho * g.wo;
        let c_out = self.c_out();
        let mut dymat = Array2::zeros((c_out, g.cols()));
        for co in 0..c_out {
            let mut row = dymat.row_mut(co);
            let row = row.as_slice_mut().unwrap();
            for n in 0..g.n {
                let src = dy.slice(ndarray::s![n, co, .., ..]);
                for (d, s) in row[n * plane..(n + 1) * plane].iter_mut().zip(src.iter()) {
                    *d = *s;
                }
            }
        }
        let cols = Self::im2col(&g, &x.view());
        let dw = dymat.dot(&cols.t());
        self.w.grad += &dw.into_shape_with_order(self.w.value.raw_dim()).unwrap();
        self.b.grad += &dymat.sum_axis(Axis(1)).into_dyn();
        let dcols = self.wmat().t().dot(&dymat);
        self.x = Some(x);
        Self::col2im(&g, &dcols).into_dyn()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<(Array4<f64>, Vec<f64>)>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::new(ArrayD::ones(IxDyn(&[channels])), true),
            beta: Param::zeros(&[channels], true),
            running_mean: Param::zeros(&[channels], false),
            running_var: Param::new(ArrayD::ones(IxDyn(&[channels])), false),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    fn forward(&mut self, x: &ArrayD<f64>) -> ArrayD<f64> {
        let x = as4(x);
        let (n, c, h, w) = x.dim();
        let m = (n * h * w) as f64;
        let mut xhat = Array4::zeros((n, c, h, w));
        let mut inv_std = vec![0.0; c];
        let mut y = Array4::zeros((n, c, h, w));
        for ch in 0..c {
            let xc = x.index_axis(Axis(1), ch);
            let mean = xc.sum() / m;
            let var = xc.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = is;
            let (gm, bt) = (self.gamma.value[ch], self.beta.value[ch]);
            let mut xh = xhat.index_axis_mut(Axis(1), ch);
            let mut yc = y.index_axis_mut(Axis(1), ch);
            ndarray::Zip::from(&mut xh).and(&mut yc).and(&xc).for_each(|xh, yv, &xv| {
                *xh = (xv - mean) * is;
                *yv = gm * *xh + bt;
            });
            let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
            let rm = &mut self.running_mean.value[ch];
            *rm = (1.0 - self.momentum) * *rm + self.momentum * mean;
            let rv = &mut self.running_var.value[ch];
            *rv = (1.0 - self.momentum) * *rv + self.momentum * unbiased;
        }
        self.cache = Some((xhat, inv_std));
        y.into_dyn()
    }

    fn infer(&self, x: &ArrayD<f64>) -> ArrayD<f64> {
        let mut y = as4(x).to_owned();
        for (ch, mut yc) in y.axis_iter_mut(Axis(1)).enumerate() {
            let is = 1.0 / (self.running_var.value[ch] + self.eps).sqrt();
            let (mean, gm, bt) = (self.running_mean.value[ch], self.gamma.value[ch], self.beta.value[ch]);
            yc.mapv_inplace(|v| gm * (v - mean) * is + bt);
        }
        y.into_dyn()
    }

    fn backward(&mut self, dy: &ArrayD<f64>) -> ArrayD<f64> {
        let (xhat, inv_std) = self.cache.as_ref().expect("forward before backward");
        let dy = as4(dy);
        let (n, c, h, w) = dy.dim();
        let m = (n * h * w) as f64;
        let mut dx = Array4::zeros((n, c, h, w));
        for ch in 0..c {
            let dyc = dy.index_axis(Axis(1), ch);
            let xh = xhat.index_axis(Axis(1), ch);
            let sum_dy = dyc.sum();
            let sum_dy_xh: f64 = dyc.iter().zip(xh.iter()).map(|(a, b)| a * b).sum();
            self.gamma.grad[ch] += sum_dy_xh;
            self.beta.grad[ch] += sum_dy;
            let k = self.gamma.value[ch] * inv_std[ch] / m;
            let mut dxc = dx.index_axis_mut(Axis(1), ch);
            ndarray::Zip::from(&mut dxc).and(&dyc).and(&xh).for_each(|d, &g, &x| {
                *d = k * (m * g - sum_dy - x * sum_dy_xh);
            });
        }
        dx.into_dyn()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GlobalAvgPool {
    hw: Option<(usize, usize)>,
}

impl GlobalAvgPool {
    fn infer(&self, x: &ArrayD<f64>) -> ArrayD<f64> {
        let x = as4(x);
        let (_, _, h, w) = x.dim();
        (x.sum_axis(Axis(3)).sum_axis(Axis(2)) / (h * w) as f64).into_dyn()
    }

    fn forward(&mut self, x: &ArrayD<f64>) -> ArrayD<f64> {
        let s = x.shape();
        self.hw = Some((s[2], s[3]));
        self.infer(x)
    }

    fn backward(&mut self, dy: &ArrayD<f64>) -> ArrayD<f64> {
        let (h, w) = self.hw.expect("forward before backward");
        let dy = as2(dy);
        let (n, c) = dy.dim();
        let scale = 1.0 / (h * w) as f64;
        Array4::from_shape_fn((n, c, h, w), |(i, j, _, _)| dy[[i, j]] * scale).into_dyn()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Flatten {
    shape: Option<Vec<usize>>,
}

impl Flatten {
    fn infer(&self, x: &ArrayD<f64>) -> ArrayD<f64> {
        let n = x.shape()[0];
        let rest = x.len() / n.max(1);
        x.as_standard_layout().into_owned().into_shape_with_order(IxDyn(&[n, rest])).unwrap()
    }

    fn forward(&mut self, x: &ArrayD<f64>) -> ArrayD<f64> {
        self.shape = Some(x.shape().to_vec());
        self.infer(x)
    }

    fn backward(&mut self, dy: &ArrayD<f64>) -> ArrayD<f64> {
        let shape = self.shape.as_ref().expect("forward before backward");
        dy.as_standard_layout().into_owned().into_shape_with_order(IxDyn(shape)).unwrap()
    }
}

/// Full pre-activation residual block:
/// `y = conv2(relu(bn2(conv1(relu(bn1(x)))))) + skip(x)`, where `skip` is
/// the identity or a strided 1×1 projection of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub bn1: BatchNorm2d,
    pub conv1: Conv2d,
    pub bn2: BatchNorm2d,
    pub conv2: Conv2d,
    pub projection: Option<Conv2d>,
    relu1: Relu,
    relu2: Relu,
}

impl ResidualBlock {
    pub fn new(c_in: usize, c_out: usize, stride: usize, rng: &mut Rng) -> Self {
        let projection = (c_in != c_out || stride != 1).then(|| Conv2d::new(c_in, c_out, 1, stride, rng));
        let mut conv1 = Conv2d::new(c_in, c_out, 3, stride, rng);
        // bn2 re-centres conv1's output, so its bias would have no effect
        conv1.b.trainable = false;
        ResidualBlock {
            bn1: BatchNorm2d::new(c_in),
            conv1,
            bn2: BatchNorm2d::new(c_out),
            conv2: Conv2d::new(c_out, c_out, 3, 1, rng),
            projection,
            relu1: Relu::default(),
            relu2: Relu::default(),
        }
    }

    fn forward(&mut self, x: &ArrayD<f64>) -> ArrayD<f64> {
        let a = self.relu1.forward(&self.bn1.forward(x));
        let h = self.conv1.forward(&a);
        let a = self.relu2.forward(&self.bn2.forward(&h));
        let mut y = self.conv2.forward(&a);
        match &mut self.projection {
            Some(p) => y += &p.forward(x),
            None => y += x,
        }
        y
    }

    fn infer(&self, x: &ArrayD<f64>) -> ArrayD<f64> {
        let a = self.bn1.infer(x).mapv(|v| v.max(0.0));
        let h = self.conv1.infer(&a);
        let a = self.bn2.infer(&h).mapv(|v| v.max(0.0));
        let mut y = self.conv2.infer(&a);
        match &self.projection {
            Some(p) => y += &p.infer(x),
            None => y += x,
        }
        y
    }

    fn backward(&mut self, dy: &ArrayD<f64>) -> ArrayD<f64> {
        let d = self.conv2.backward(dy);
        let d = self.bn2.backward(&self.relu2.backward(&d));
        let d = self.conv1.backward(&d);
        let mut dx = self.bn1.backward(&self.relu1.backward(&d));
        match &mut self.projection {
            Some(p) => dx += &p.backward(dy),
            None => dx += dy,
        }
        dx
    }

    fn params(&mut self) -> Vec<&mut Param> {
        let mut v = vec![
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.bn1.running_mean,
            &mut self.bn1.running_var,
            &mut self.conv1.w,
            &mut self.conv1.b,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.bn2.running_mean,
            &mut self.bn2.running_var,
            &mut self.conv2.w,
            &mut self.conv2.b,
        ];
        if let Some(p) = &mut self.projection {
            v.push(&mut p.w);
            v.push(&mut p.b);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Relu(Relu),
    Conv(Conv2d),
    BatchNorm(BatchNorm2d),
    Pool(GlobalAvgPool),
    Flatten(Flatten),
    Residual(Box<ResidualBlock>),
}

impl Layer {
    pub fn forward(&mut self, x: &ArrayD<f64>) -> ArrayD<f64> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Relu(l) => l.forward(x),
            Layer::Conv(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x),
            Layer::Pool(l) => l.forward(x),
            Layer::Flatten(l) => l.forward(x),
            Layer::Residual(l) => l.forward(x),
        }
    }

    pub fn infer(&self, x: &ArrayD<f64>) -> ArrayD<f64> {
        match self {
            Layer::Dense(l) => l.infer(x),
            Layer::Relu(_) => x.mapv(|v| v.max(0.0)),
            Layer::Conv(l) => l.infer(x),
            Layer::BatchNorm(l) => l.infer(x),
            Layer::Pool(l) => l.infer(x),
            Layer::Flatten(l) => l.infer(x),
            Layer::Residual(l) => l.infer(x),
        }
    }

    pub fn backward(&mut self, dy: &ArrayD<f64>) -> ArrayD<f64> {
        match self {
            Layer::Dense(l) => l.backward(dy),
            Layer::Relu(l) => l.backward(dy),
            Layer::Conv(l) => l.backward(dy),
            Layer::BatchNorm(l) => l.backward(dy),
            Layer::Pool(l) => l.backward(dy),
            Layer::Flatten(l) => l.backward(dy),
            Layer::Residual(l) => l.backward(dy),
        }
    }

    /// Every parameter tensor in a fixed order (persistence relies on it).
    pub fn params(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Dense(l) => vec![&mut l.w, &mut l.b],
            Layer::Conv(l) => vec![&mut l.w, &mut l.b],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta, &mut l.running_mean, &mut l.running_var],
            Layer::Residual(l) => l.params(),
            Layer::Relu(_) | Layer::Pool(_) | Layer::Flatten(_) => vec![],
        }
    }
}

/// A stack of layers applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn forward(&mut self, x: &ArrayD<f64>) -> ArrayD<f64> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h);
        }
        h
    }

    pub fn infer(&self, x: &ArrayD<f64>) -> ArrayD<f64> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.infer(&h);
        }
        h
    }

    pub fn backward(&mut self, dy: &ArrayD<f64>) -> ArrayD<f64> {
        let mut d = dy.clone();
        for l in self.layers.iter_mut().rev() {
            d = l.backward(&d);
        }
        d
    }

    pub fn params(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(Layer::params).collect()
    }

    pub fn zero_grad(&mut self) {
        self.params().into_iter().for_each(Param::zero_grad);
    }

    pub fn n_trainable(&mut self) -> usize {
        self.params().iter().filter(|p| p.trainable).map(|p| p.len()).sum()
    }
}

/// Row-wise softmax of logits.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

/// Mean categorical cross-entropy (probabilities clipped at `clip`) and its
/// gradient with respect to the logits, `(p - onehot) / N`.
pub fn softmax_cross_entropy(logits: &Array2<f64>, targets: &[usize], clip: f64) -> (f64, Array2<f64>) {
    let n = logits.nrows() as f64;
    let mut p = softmax_rows(logits);
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        loss -= p[[i, t]].clamp(clip, 1.0).ln();
        p[[i, t]] -= 1.0;
    }
    p /= n;
    (loss / n, p)
}

/// Draw a random array, used by tests and gradient checks.
pub fn random_array(shape: &[usize], rng: &mut Rng) -> ArrayD<f64> {
    ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(-1.0..1.0))
}
