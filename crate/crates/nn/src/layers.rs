//! Layer implementations with cached forward state for exact backward passes.
//!
//! Activations are laid out `B x C x H x W` for the convolutional stack and
//! `B x F` after flattening. Every layer owns its parameter gradients, which
//! accumulate across `backward` calls until [`Layer::zero_grad`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Activation {
    Elu,
    LeakyRelu { alpha: f64 },
}

impl Activation {
    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu { alpha: 0.3 }
    }

    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Elu => {
                if x > T::zero() {
                    x
                } else {
                    x.exp() - T::one()
                }
            }
            Activation::LeakyRelu { alpha } => {
                if x > T::zero() {
                    x
                } else {
                    T::lit(alpha) * x
                }
            }
        }
    }

    fn derivative<T: Real>(self, x: T) -> T {
        match self {
            Activation::Elu => {
                if x > T::zero() {
                    T::one()
                } else {
                    x.exp()
                }
            }
            Activation::LeakyRelu { alpha } => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::lit(alpha)
                }
            }
        }
    }
}

/// Layer descriptor; the serialized form is the checkpoint's layer list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "layer")]
pub enum LayerSpec {
    Conv2d { in_channels: usize, out_channels: usize },
    BatchNorm { channels: usize },
    Activation { activation: Activation },
    MaxPool { pool: (usize, usize) },
    Dropout { rate: f64 },
    Flatten,
    Dense { inputs: usize, outputs: usize },
    Sigmoid,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::BatchNorm { .. } => "batch_norm",
            LayerSpec::Activation {
                activation: Activation::Elu,
            } => "elu",
            LayerSpec::Activation { .. } => "leaky_relu",
            LayerSpec::MaxPool { .. } => "max_pool",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Sigmoid => "sigmoid",
        }
    }

    /// Output shape (without batch axis) for a given input shape, or `None`
    /// when the input is incompatible.
    pub fn output_shape(&self, input: &[usize]) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
            } => match input {
                [c, h, w] if *c == in_channels => Some(vec![out_channels, *h, *w]),
                _ => None,
            },
            LayerSpec::BatchNorm { channels } => (input.first() == Some(&channels)).then(|| input.to_vec()),
            LayerSpec::Activation { .. } | LayerSpec::Dropout { .. } | LayerSpec::Sigmoid => {
                Some(input.to_vec())
            }
            LayerSpec::MaxPool { pool: (ph, pw) } => match input {
                [c, h, w] if ph > 0 && pw > 0 && h / ph > 0 && w / pw > 0 => {
                    Some(vec![*c, h / ph, w / pw])
                }
                _ => None,
            },
            LayerSpec::Flatten => Some(vec![input.iter().product()]),
            LayerSpec::Dense { inputs, outputs } => {
                (input == [inputs]).then(|| vec![outputs])
            }
        }
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
            } => out_channels * in_channels * 9 + out_channels,
            LayerSpec::BatchNorm { channels } => 2 * channels,
            LayerSpec::Dense { inputs, outputs } => inputs * outputs + outputs,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `out x in x 3 x 3`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
    input: Option<Tensor<T>>,
}

#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    pub channels: usize,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub grad_gamma: Tensor<T>,
    pub grad_beta: Tensor<T>,
    cache: Option<BnCache<T>>,
}

#[derive(Clone, Debug)]
struct BnCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    batch_stats: bool,
}

#[derive(Clone, Debug)]
pub struct MaxPool<T> {
    pub pool: (usize, usize),
    cache: Option<(Vec<usize>, Vec<usize>)>,
    _marker: std::marker::PhantomData<T>,
}

#[derive(Clone, Debug)]
pub struct Dropout<T> {
    pub rate: f64,
    mask: Option<Vec<T>>,
}

#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
    input: Option<Tensor<T>>,
}

#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    BatchNorm(BatchNorm<T>),
    Activation(Activation, Option<Tensor<T>>),
    MaxPool(MaxPool<T>),
    Dropout(Dropout<T>),
    Flatten(Option<Vec<usize>>),
    Dense(Dense<T>),
    Sigmoid(Option<Tensor<T>>),
}

fn he_normal<T: Real>(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(z * std)
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape product")
}

/// Unfold a `C x H x W` image into `(C*9) x (H*W)` patch columns for a 3x3
/// kernel with one pixel of zero padding.
fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ch * 9) + ky * 3 + kx) * hw..((ch * 9) + ky * 3 + kx + 1) * hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add patch columns back onto the image.
fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, x: &mut [T]) {
    let hw = h * w;
    x.fill(T::zero());
    for ch in 0..c {
        let plane = &mut x[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ch * 9) + ky * 3 + kx) * hw..((ch * 9) + ky * 3 + kx + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            for (d, s) in dst[..w - 1].iter_mut().zip(&src[1..]) {
                                *d += *s;
                            }
                        }
                        1 => {
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += *s;
                            }
                        }
                        _ => {
                            for (d, s) in dst[1..].iter_mut().zip(&src[..w - 1]) {
                                *d += *s;
                            }
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Conv2d<T> {
    pub fn new(in_channels: usize, out_channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let shape = [out_channels, in_channels, 3, 3];
        Conv2d {
            in_channels,
            out_channels,
            weight: he_normal(&shape, in_channels * 9, rng),
            bias: Tensor::zeros(&[out_channels]),
            grad_weight: Tensor::zeros(&shape),
            grad_bias: Tensor::zeros(&[out_channels]),
            input: None,
        }
    }

    fn compute(&self, x: &Tensor<T>) -> Tensor<T> {
        let (b, c, h, w) = dims4(x);
        debug_assert_eq!(c, self.in_channels);
        let hw = h * w;
        let k = c * 9;
        let o = self.out_channels;
        let mut out = Tensor::zeros(&[b, o, h, w]);
        let mut cols = vec![T::zero(); k * hw];
        for n in 0..b {
            im2col(&x.data()[n * c * hw..(n + 1) * c * hw], c, h, w, &mut cols);
            let dst = &mut out.data_mut()[n * o * hw..(n + 1) * o * hw];
            for (oc, row) in dst.chunks_mut(hw).enumerate() {
                row.fill(self.bias.data()[oc]);
            }
            T::gemm(
                o,
                k,
                hw,
                T::one(),
                self.weight.data(),
                k as isize,
                1,
                &cols,
                hw as isize,
                1,
                T::one(),
                dst,
                hw as isize,
                1,
            );
        }
        out
    }

    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Option<Tensor<T>> {
        let x = self.input.as_ref()?;
        let (b, c, h, w) = dims4(x);
        let hw = h * w;
        let k = c * 9;
        let o = self.out_channels;
        let mut cols = vec![T::zero(); k * hw];
        let mut dcols = vec![T::zero(); k * hw];
        let mut dx = if need_input_grad {
            Tensor::zeros(x.shape())
        } else {
            Tensor::zeros(&[0])
        };
        for n in 0..b {
            im2col(&x.data()[n * c * hw..(n + 1) * c * hw], c, h, w, &mut cols);
            let g = &grad.data()[n * o * hw..(n + 1) * o * hw];
            for (oc, row) in g.chunks(hw).enumerate() {
                let mut s = T::zero();
                for v in row {
                    s += *v;
                }
                self.grad_bias.data_mut()[oc] += s;
            }
            // dW (o x k) += g (o x hw) * cols^T (hw x k)
            T::gemm(
                o,
                hw,
                k,
                T::one(),
                g,
                hw as isize,
                1,
                &cols,
                1,
                hw as isize,
                T::one(),
                self.grad_weight.data_mut(),
                k as isize,
                1,
            );
            if need_input_grad {
                // dcols (k x hw) = W^T (k x o) * g (o x hw)
                T::gemm(
                    k,
                    o,
                    hw,
                    T::one(),
                    self.weight.data(),
                    1,
                    k as isize,
                    g,
                    hw as isize,
                    1,
                    T::zero(),
                    &mut dcols,
                    hw as isize,
                    1,
                );
                col2im(
                    &dcols,
                    c,
                    h,
                    w,
                    &mut dx.data_mut()[n * c * hw..(n + 1) * c * hw],
                );
            }
        }
        Some(dx)
    }
}

fn dims4<T: Real>(x: &Tensor<T>) -> (usize, usize, usize, usize) {
    match *x.shape() {
        [b, c, h, w] => (b, c, h, w),
        _ => panic!("expected a 4-d activation, got {:?}", x.shape()),
    }
}

/// `(batch, channels, spatial)` view used by batch norm for both 4-d and 2-d inputs.
fn bn_dims(shape: &[usize]) -> (usize, usize, usize) {
    match *shape {
        [b, c] => (b, c, 1),
        [b, c, h, w] => (b, c, h * w),
        _ => panic!("batch norm expects 2-d or 4-d input, got {shape:?}"),
    }
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            channels,
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            grad_gamma: Tensor::zeros(&[channels]),
            grad_beta: Tensor::zeros(&[channels]),
            cache: None,
        }
    }

    fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let (b, c, s) = bn_dims(x.shape());
        let mut out = x.clone();
        let eps = T::lit(BN_EPSILON);
        for ch in 0..c {
            let inv = T::one() / (self.running_var.data()[ch] + eps).sqrt();
            let scale = self.gamma.data()[ch] * inv;
            let shift = self.beta.data()[ch] - self.running_mean.data()[ch] * scale;
            for n in 0..b {
                for v in &mut out.data_mut()[(n * c + ch) * s..(n * c + ch + 1) * s] {
                    *v = *v * scale + shift;
                }
            }
        }
        out
    }

    /// Train-mode forward. With `batch_stats` false the running statistics
    /// normalize the batch (and are left untouched).
    fn forward_train(&mut self, x: &Tensor<T>, batch_stats: bool) -> Tensor<T> {
        let (b, c, s) = bn_dims(x.shape());
        let count = b * s;
        let eps = T::lit(BN_EPSILON);
        let mut xhat = x.clone();
        let mut inv_std = vec![T::zero(); c];
        let mut out = x.clone();
        for ch in 0..c {
            let (mean, var) = if batch_stats {
                let mut sum = 0.0f64;
                for n in 0..b {
                    for v in &x.data()[(n * c + ch) * s..(n * c + ch + 1) * s] {
                        sum += v.as_f64();
                    }
                }
                let mean = sum / count as f64;
                let mut sq = 0.0f64;
                for n in 0..b {
                    for v in &x.data()[(n * c + ch) * s..(n * c + ch + 1) * s] {
                        let d = v.as_f64() - mean;
                        sq += d * d;
                    }
                }
                let var = sq / count as f64;
                let unbiased = if count > 1 {
                    sq / (count - 1) as f64
                } else {
                    var
                };
                let m = T::lit(BN_MOMENTUM);
                let rm = &mut self.running_mean.data_mut()[ch];
                *rm = m * *rm + (T::one() - m) * T::lit(mean);
                let rv = &mut self.running_var.data_mut()[ch];
                *rv = m * *rv + (T::one() - m) * T::lit(unbiased);
                (T::lit(mean), T::lit(var))
            } else {
                (self.running_mean.data()[ch], self.running_var.data()[ch])
            };
            let inv = T::one() / (var + eps).sqrt();
            inv_std[ch] = inv;
            let g = self.gamma.data()[ch];
            let bt = self.beta.data()[ch];
            for n in 0..b {
                let range = (n * c + ch) * s..(n * c + ch + 1) * s;
                for (xh, o) in xhat.data_mut()[range.clone()]
                    .iter_mut()
                    .zip(&mut out.data_mut()[range])
                {
                    *xh = (*xh - mean) * inv;
                    *o = g * *xh + bt;
                }
            }
        }
        self.cache = Some(BnCache {
            xhat,
            inv_std,
            batch_stats,
        });
        out
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Option<Tensor<T>> {
        let cache = self.cache.as_ref()?;
        let (b, c, s) = bn_dims(grad.shape());
        let count = T::lit((b * s) as f64);
        let mut dx = Tensor::zeros(grad.shape());
        for ch in 0..c {
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for n in 0..b {
                let range = (n * c + ch) * s..(n * c + ch + 1) * s;
                for (dy, xh) in grad.data()[range.clone()].iter().zip(&cache.xhat.data()[range]) {
                    sum_dy += *dy;
                    sum_dy_xhat += *dy * *xh;
                }
            }
            self.grad_gamma.data_mut()[ch] += sum_dy_xhat;
            self.grad_beta.data_mut()[ch] += sum_dy;
            let g = self.gamma.data()[ch];
            let inv = cache.inv_std[ch];
            for n in 0..b {
                let range = (n * c + ch) * s..(n * c + ch + 1) * s;
                let dst = &mut dx.data_mut()[range.clone()];
                let dys = &grad.data()[range.clone()];
                let xhs = &cache.xhat.data()[range];
                for ((d, dy), xh) in dst.iter_mut().zip(dys).zip(xhs) {
                    *d = if cache.batch_stats {
                        g * inv * (*dy - sum_dy / count - *xh * sum_dy_xhat / count)
                    } else {
                        g * inv * *dy
                    };
                }
            }
        }
        Some(dx)
    }
}

impl<T: Real> MaxPool<T> {
    pub fn new(pool: (usize, usize)) -> Self {
        MaxPool {
            pool,
            cache: None,
            _marker: std::marker::PhantomData,
        }
    }

    fn compute(&self, x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
        let (b, c, h, w) = dims4(x);
        let (ph, pw) = self.pool;
        let (oh, ow) = (h / ph, w / pw);
        let mut out = Tensor::zeros(&[b, c, oh, ow]);
        let mut argmax = vec![0usize; b * c * oh * ow];
        let xd = x.data();
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * ph * w + ox * pw;
                    for dy in 0..ph {
                        for dx in 0..pw {
                            let idx = base + (oy * ph + dy) * w + ox * pw + dx;
                            if xd[idx] > xd[best] {
                                best = idx;
                            }
                        }
                    }
                    let o = (plane * oh + oy) * ow + ox;
                    out.data_mut()[o] = xd[best];
                    argmax[o] = best;
                }
            }
        }
        (out, argmax)
    }

    fn backward(&self, grad: &Tensor<T>) -> Option<Tensor<T>> {
        let (argmax, in_shape) = self.cache.as_ref()?;
        let mut dx = Tensor::zeros(in_shape);
        for (g, &i) in grad.data().iter().zip(argmax) {
            dx.data_mut()[i] += *g;
        }
        Some(dx)
    }
}

impl<T: Real> Dense<T> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Dense {
            inputs,
            outputs,
            weight: he_normal(&[outputs, inputs], inputs, rng),
            bias: Tensor::zeros(&[outputs]),
            grad_weight: Tensor::zeros(&[outputs, inputs]),
            grad_bias: Tensor::zeros(&[outputs]),
            input: None,
        }
    }

    fn compute(&self, x: &Tensor<T>) -> Tensor<T> {
        let b = x.shape()[0];
        let mut out = Tensor::zeros(&[b, self.outputs]);
        for row in out.data_mut().chunks_mut(self.outputs) {
            row.copy_from_slice(self.bias.data());
        }
        // out (b x o) += x (b x i) * W^T (i x o)
        T::gemm(
            b,
            self.inputs,
            self.outputs,
            T::one(),
            x.data(),
            self.inputs as isize,
            1,
            self.weight.data(),
            1,
            self.inputs as isize,
            T::one(),
            out.data_mut(),
            self.outputs as isize,
            1,
        );
        out
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Option<Tensor<T>> {
        let x = self.input.as_ref()?;
        let b = x.shape()[0];
        let (i, o) = (self.inputs, self.outputs);
        for row in grad.data().chunks(o) {
            for (gb, g) in self.grad_bias.data_mut().iter_mut().zip(row) {
                *gb += *g;
            }
        }
        // dW (o x i) += grad^T (o x b) * x (b x i)
        T::gemm(
            o,
            b,
            i,
            T::one(),
            grad.data(),
            1,
            o as isize,
            x.data(),
            i as isize,
            1,
            T::one(),
            self.grad_weight.data_mut(),
            i as isize,
            1,
        );
        let mut dx = Tensor::zeros(&[b, i]);
        T::gemm(
            b,
            o,
            i,
            T::one(),
            grad.data(),
            o as isize,
            1,
            self.weight.data(),
            i as isize,
            1,
            T::zero(),
            dx.data_mut(),
            i as isize,
            1,
        );
        Some(dx)
    }
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Layer<T> {
    pub fn build(spec: &LayerSpec, rng: &mut ChaCha8Rng) -> Self {
        match *spec {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
            } => Layer::Conv2d(Conv2d::new(in_channels, out_channels, rng)),
            LayerSpec::BatchNorm { channels } => Layer::BatchNorm(BatchNorm::new(channels)),
            LayerSpec::Activation { activation } => Layer::Activation(activation, None),
            LayerSpec::MaxPool { pool } => Layer::MaxPool(MaxPool::new(pool)),
            LayerSpec::Dropout { rate } => Layer::Dropout(Dropout { rate, mask: None }),
            LayerSpec::Flatten => Layer::Flatten(None),
            LayerSpec::Dense { inputs, outputs } => Layer::Dense(Dense::new(inputs, outputs, rng)),
            LayerSpec::Sigmoid => Layer::Sigmoid(None),
        }
    }

    /// Stateless inference-mode forward.
    pub fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        match self {
            Layer::Conv2d(conv) => conv.compute(x),
            Layer::BatchNorm(bn) => bn.infer(x),
            Layer::Activation(act, _) => map(x, |v| act.apply(v)),
            Layer::MaxPool(pool) => pool.compute(x).0,
            Layer::Dropout(_) => x.clone(),
            Layer::Flatten(_) => flatten(x),
            Layer::Dense(dense) => dense.compute(x),
            Layer::Sigmoid(_) => map(x, sigmoid),
        }
    }

    /// Train-mode forward that caches whatever `backward` needs.
    pub fn forward_train(&mut self, x: &Tensor<T>, rng: &mut ChaCha8Rng, bn_batch_stats: bool) -> Tensor<T> {
        match self {
            Layer::Conv2d(conv) => {
                let out = conv.compute(x);
                conv.input = Some(x.clone());
                out
            }
            Layer::BatchNorm(bn) => bn.forward_train(x, bn_batch_stats),
            Layer::Activation(act, cache) => {
                let out = map(x, |v| act.apply(v));
                *cache = Some(x.clone());
                out
            }
            Layer::MaxPool(pool) => {
                let (out, argmax) = pool.compute(x);
                pool.cache = Some((argmax, x.shape().to_vec()));
                out
            }
            Layer::Dropout(drop) => {
                if drop.rate <= 0.0 {
                    drop.mask = Some(vec![T::one(); x.len()]);
                    return x.clone();
                }
                let keep = 1.0 - drop.rate;
                let scale = T::lit(1.0 / keep);
                let mask: Vec<T> = (0..x.len())
                    .map(|_| {
                        if rng.gen::<f64>() < keep {
                            scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                let mut out = x.clone();
                for (v, m) in out.data_mut().iter_mut().zip(&mask) {
                    *v *= *m;
                }
                drop.mask = Some(mask);
                out
            }
            Layer::Flatten(cache) => {
                *cache = Some(x.shape().to_vec());
                flatten(x)
            }
            Layer::Dense(dense) => {
                let out = dense.compute(x);
                dense.input = Some(x.clone());
                out
            }
            Layer::Sigmoid(cache) => {
                let out = map(x, sigmoid);
                *cache = Some(out.clone());
                out
            }
        }
    }

    /// Backpropagate `grad` (w.r.t. this layer's output). Returns `None` when no
    /// train-mode forward has been cached.
    pub fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Option<Tensor<T>> {
        match self {
            Layer::Conv2d(conv) => conv.backward(grad, need_input_grad),
            Layer::BatchNorm(bn) => bn.backward(grad),
            Layer::Activation(act, cache) => {
                let x = cache.as_ref()?;
                let mut dx = grad.clone();
                for (d, xv) in dx.data_mut().iter_mut().zip(x.data()) {
                    *d *= act.derivative(*xv);
                }
                Some(dx)
            }
            Layer::MaxPool(pool) => pool.backward(grad),
            Layer::Dropout(drop) => {
                let mask = drop.mask.as_ref()?;
                let mut dx = grad.clone();
                for (d, m) in dx.data_mut().iter_mut().zip(mask) {
                    *d *= *m;
                }
                Some(dx)
            }
            Layer::Flatten(cache) => grad.clone().reshape(cache.as_ref()?).ok(),
            Layer::Dense(dense) => dense.backward(grad),
            Layer::Sigmoid(cache) => {
                let s = cache.as_ref()?;
                let mut dx = grad.clone();
                for (d, sv) in dx.data_mut().iter_mut().zip(s.data()) {
                    *d *= *sv * (T::one() - *sv);
                }
                Some(dx)
            }
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv2d(c) => c.input = None,
            Layer::BatchNorm(b) => b.cache = None,
            Layer::Activation(_, c) => *c = None,
            Layer::MaxPool(p) => p.cache = None,
            Layer::Dropout(d) => d.mask = None,
            Layer::Flatten(c) => *c = None,
            Layer::Dense(d) => d.input = None,
            Layer::Sigmoid(c) => *c = None,
        }
    }

    /// Trainable tensors in declaration order.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => vec![],
        }
    }

    pub fn grads(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv2d(c) => vec![&c.grad_weight, &c.grad_bias],
            Layer::BatchNorm(b) => vec![&b.grad_gamma, &b.grad_beta],
            Layer::Dense(d) => vec![&d.grad_weight, &d.grad_bias],
            _ => vec![],
        }
    }

    /// Parameters paired with their accumulated gradients.
    pub fn param_grad_pairs(&mut self) -> Vec<(&mut Tensor<T>, &Tensor<T>)> {
        match self {
            Layer::Conv2d(c) => vec![(&mut c.weight, &c.grad_weight), (&mut c.bias, &c.grad_bias)],
            Layer::BatchNorm(b) => vec![(&mut b.gamma, &b.grad_gamma), (&mut b.beta, &b.grad_beta)],
            Layer::Dense(d) => vec![(&mut d.weight, &d.grad_weight), (&mut d.bias, &d.grad_bias)],
            _ => vec![],
        }
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn buffers(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::BatchNorm(b) => vec![&b.running_mean, &b.running_var],
            _ => vec![],
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::BatchNorm(b) => vec![&mut b.running_mean, &mut b.running_var],
            _ => vec![],
        }
    }

    pub fn zero_grad(&mut self) {
        match self {
            Layer::Conv2d(c) => {
                c.grad_weight.fill(T::zero());
                c.grad_bias.fill(T::zero());
            }
            Layer::BatchNorm(b) => {
                b.grad_gamma.fill(T::zero());
                b.grad_beta.fill(T::zero());
            }
            Layer::Dense(d) => {
                d.grad_weight.fill(T::zero());
                d.grad_bias.fill(T::zero());
            }
            _ => {}
        }
    }
}

fn map<T: Real>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| *v = f(*v));
    out
}

fn flatten<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let b = x.shape()[0];
    let rest = x.len() / b.max(1);
    x.clone().reshape(&[b, rest]).expect("flatten preserves size")
}
