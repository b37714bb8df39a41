use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layers::{Activation, Layer, LayerSpec};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// The two block layouts: one convolution per block (baseline) or two.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// One conv per block, ELU activations.
    Initial,
    /// Two convs per block, leaky-ReLU (alpha 0.3) activations.
    Proposed,
}

impl Architecture {
    pub fn activation(self) -> Activation {
        match self {
            Architecture::Initial => Activation::Elu,
            Architecture::Proposed => Activation::leaky_relu(),
        }
    }

    pub fn convs_per_block(self) -> usize {
        match self {
            Architecture::Initial => 1,
            Architecture::Proposed => 2,
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "initial" => Ok(Architecture::Initial),
            "proposed" => Ok(Architecture::Proposed),
            other => Err(format!("unknown architecture `{other}` (expected initial|proposed)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Architecture,
    /// `channels, height, width`
    pub input: [usize; 3],
    pub depths: [usize; 4],
    pub pools: [(usize, usize); 4],
    pub conv_dropout: f64,
    pub head_units: usize,
    pub head_dropout: f64,
    pub classes: usize,
}

impl ModelConfig {
    pub fn new(arch: Architecture) -> Self {
        ModelConfig {
            arch,
            input: [1, 96, 87],
            depths: [64, 128, 256, 640],
            pools: [(2, 2), (2, 2), (3, 3), (3, 3)],
            conv_dropout: 0.2,
            head_units: 1024,
            head_dropout: 0.5,
            classes: 11,
        }
    }

    pub fn initial() -> Self {
        Self::new(Architecture::Initial)
    }

    pub fn proposed() -> Self {
        Self::new(Architecture::Proposed)
    }

    pub fn with_depths(mut self, depths: [usize; 4]) -> Self {
        self.depths = depths;
        self
    }

    pub fn with_input(mut self, input: [usize; 3]) -> Self {
        self.input = input;
        self
    }

    pub fn with_pools(mut self, pools: [(usize, usize); 4]) -> Self {
        self.pools = pools;
        self
    }

    pub fn with_head_units(mut self, units: usize) -> Self {
        self.head_units = units;
        self
    }

    pub fn with_classes(mut self, classes: usize) -> Self {
        self.classes = classes;
        self
    }

    pub fn with_dropout(mut self, conv: f64, head: f64) -> Self {
        self.conv_dropout = conv;
        self.head_dropout = head;
        self
    }

    /// Flattened feature length entering the dense head, if the pooling chain fits.
    pub fn flatten_len(&self) -> Result<usize> {
        Ok(self.block_shapes()?.last().map(|s| s.iter().product()).unwrap_or(0))
    }

    /// `channels, height, width` after each conv block.
    pub fn block_shapes(&self) -> Result<Vec<[usize; 3]>> {
        let [_, mut h, mut w] = self.input;
        let mut out = Vec::with_capacity(4);
        for (d, (ph, pw)) in self.depths.iter().zip(self.pools) {
            if ph == 0 || pw == 0 || h / ph == 0 || w / pw == 0 {
                return Err(NnError::Config(format!(
                    "pool {ph}x{pw} does not fit a {h}x{w} feature map"
                )));
            }
            h /= ph;
            w /= pw;
            out.push([*d, h, w]);
        }
        Ok(out)
    }

    /// Ordered layer list: four conv blocks followed by the dense head.
    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>> {
        if self.depths.iter().any(|&d| d == 0) || self.head_units == 0 || self.classes == 0 {
            return Err(NnError::Config("zero-sized layer".into()));
        }
        if self.input[0] == 0 {
            return Err(NnError::Config("input must have at least one channel".into()));
        }
        let flat = self.flatten_len()?;
        let act = self.arch.activation();
        let mut specs = Vec::new();
        let mut channels = self.input[0];
        for (&depth, &pool) in self.depths.iter().zip(&self.pools) {
            for _ in 0..self.arch.convs_per_block() {
                specs.push(LayerSpec::Conv2d {
                    in_channels: channels,
                    out_channels: depth,
                });
                specs.push(LayerSpec::BatchNorm { channels: depth });
                specs.push(LayerSpec::Activation { activation: act });
                channels = depth;
            }
            specs.push(LayerSpec::MaxPool { pool });
            specs.push(LayerSpec::Dropout {
                rate: self.conv_dropout,
            });
        }
        // Head order: dense, activation, batch norm, dropout, dense, sigmoid.
        specs.push(LayerSpec::Flatten);
        specs.push(LayerSpec::Dense {
            inputs: flat,
            outputs: self.head_units,
        });
        specs.push(LayerSpec::Activation { activation: act });
        specs.push(LayerSpec::BatchNorm {
            channels: self.head_units,
        });
        specs.push(LayerSpec::Dropout {
            rate: self.head_dropout,
        });
        specs.push(LayerSpec::Dense {
            inputs: self.head_units,
            outputs: self.classes,
        });
        specs.push(LayerSpec::Sigmoid);
        Ok(specs)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.layer_specs()?.iter().map(LayerSpec::param_count).sum())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Debug)]
pub struct Model<T> {
    config: ModelConfig,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer<T>>,
    dropout_rng: ChaCha8Rng,
    /// When false, train-mode batch norm normalizes with running statistics.
    pub bn_batch_stats: bool,
    scores: Option<Tensor<T>>,
}

impl<T: Real> Model<T> {
    /// He-normal weights, zero biases, unit/zero batch-norm affine; deterministic in `seed`.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        let specs = config.layer_specs()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs.iter().map(|s| Layer::build(s, &mut rng)).collect();
        Ok(Model {
            config: config.clone(),
            specs,
            layers,
            dropout_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15),
            bn_batch_stats: true,
            scores: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Per-layer output shapes (without the batch axis).
    pub fn layer_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let mut shape = self.config.input.to_vec();
        self.specs
            .iter()
            .map(|s| {
                shape = s.output_shape(&shape).expect("validated at build");
                (s.name(), shape.clone())
            })
            .collect()
    }

    pub fn reseed_dropout(&mut self, seed: u64) {
        self.dropout_rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        if s.len() != 4 || s[1..] != self.config.input[..] {
            let mut expected = vec![s.first().copied().unwrap_or(0)];
            expected.extend_from_slice(&self.config.input);
            return Err(NnError::Shape {
                expected,
                got: s.to_vec(),
            });
        }
        Ok(())
    }

    fn check_finite(&self, index: usize, t: &Tensor<T>) -> Result<()> {
        if t.all_finite() {
            Ok(())
        } else {
            Err(NnError::NonFinite {
                index,
                name: self.specs[index].name().to_string(),
            })
        }
    }

    /// Inference-mode forward on an immutable model: `B x C x H x W` to `B x classes`.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        if !x.all_finite() {
            return Err(NnError::NonFinite {
                index: 0,
                name: "input".into(),
            });
        }
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.infer(&h);
            self.check_finite(i, &h)?;
        }
        Ok(h)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode == Mode::Infer {
            return self.predict(x);
        }
        self.check_input(x)?;
        if !x.all_finite() {
            return Err(NnError::NonFinite {
                index: 0,
                name: "input".into(),
            });
        }
        let mut h = x.clone();
        for i in 0..self.layers.len() {
            h = self.layers[i].forward_train(&h, &mut self.dropout_rng, self.bn_batch_stats);
            self.check_finite(i, &h)?;
        }
        self.scores = Some(h.clone());
        Ok(h)
    }

    /// Backward pass of the fused sigmoid + mean binary cross-entropy on the
    /// last train-mode forward. Gradients accumulate into each layer.
    pub fn backward(&mut self, targets: &Tensor<T>) -> Result<()> {
        let scores = self.scores.as_ref().ok_or(NnError::MissingCache)?;
        if scores.shape() != targets.shape() {
            return Err(NnError::Shape {
                expected: scores.shape().to_vec(),
                got: targets.shape().to_vec(),
            });
        }
        let n = T::lit(scores.len() as f64);
        let mut grad = scores.clone();
        for (g, t) in grad.data_mut().iter_mut().zip(targets.data()) {
            *g = (*g - *t) / n;
        }
        let last = self.layers.len() - 1;
        self.backward_range(grad, last)
    }

    /// Backward from an arbitrary gradient w.r.t. the output scores.
    pub fn backward_from_scores(&mut self, grad_scores: &Tensor<T>) -> Result<()> {
        let last = self.layers.len();
        self.backward_range(grad_scores.clone(), last)
    }

    /// Backpropagate `grad`, which is taken w.r.t. the input of layer `end`.
    fn backward_range(&mut self, mut grad: Tensor<T>, end: usize) -> Result<()> {
        for i in (0..end).rev() {
            grad = self.layers[i]
                .backward(&grad, i > 0)
                .ok_or(NnError::MissingCache)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(Layer::zero_grad);
    }

    pub fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
        self.scores = None;
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn grads(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.grads()).collect()
    }

    pub fn param_grad_pairs(&mut self) -> Vec<(&mut Tensor<T>, &Tensor<T>)> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.param_grad_pairs())
            .collect()
    }

    pub fn buffers(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.buffers_mut()).collect()
    }

    /// Copy parameters and buffers from `other` (same config).
    pub fn load_state_from(&mut self, other: &Model<T>) {
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            dst.data_mut().copy_from_slice(src.data());
        }
        for (dst, src) in self.buffers_mut().into_iter().zip(other.buffers()) {
            dst.data_mut().copy_from_slice(src.data());
        }
    }
}
