use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    Activation, ActivationKind, BatchNorm, Conv1d, Dropout, Flatten, LayerNorm, Linear, MeanPool, Pool1d, PoolKind,
    ResBlock, Sequential,
};
use super::{Ctx, Layer, Param, Tensor};
use crate::error::{Error, Result};
use crate::Scalar;

/// Channel count of the first residual block.
pub const BASE_FILTERS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub depth: usize,
    pub width: usize,
    pub activation: ActivationKind,
    pub batch_norm: bool,
    pub dropout: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            width: 128,
            activation: ActivationKind::ReLU,
            batch_norm: false,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormType {
    Batch,
    Layer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResNetConfig {
    pub num_block: usize,
    pub num_linear: usize,
    pub use_norm: bool,
    pub norm_type: NormType,
    pub use_dropout: bool,
    pub dropout_prob: f64,
    pub downsample_gap: usize,
    pub increasefilter_gap: usize,
    pub pooling: PoolKind,
    pub kernel_fraction: f64,
    pub activation: ActivationKind,
}

impl Default for ResNetConfig {
    fn default() -> Self {
        Self {
            num_block: 1,
            num_linear: 1,
            use_norm: true,
            norm_type: NormType::Batch,
            use_dropout: false,
            dropout_prob: 0.1,
            downsample_gap: 0,
            increasefilter_gap: 0,
            pooling: PoolKind::MaxPooling,
            kernel_fraction: 0.5,
            activation: ActivationKind::ReLU,
        }
    }
}

/// `K = max(1, round(φ·F))`, rounding half away from zero.
pub fn kernel_size(fraction: f64, features: usize) -> usize {
    ((fraction * features as f64).round() as usize).max(1)
}

fn act<T: Scalar>(kind: ActivationKind) -> Box<dyn Layer<T>> {
    Box::new(Activation::new(kind))
}

/// Flatten, then `depth × [Linear → BatchNorm? → Act → Dropout?]`, then a
/// single-output linear head.
pub fn build_mlp<T: Scalar>(cfg: &MlpConfig, in_features: usize, rng: &mut ChaCha8Rng) -> Result<Sequential<T>> {
    if cfg.depth == 0 || cfg.width == 0 || in_features == 0 {
        return Err(Error::Config(format!("invalid MLP shape {cfg:?} with {in_features} inputs")));
    }
    let mut layers: Vec<Box<dyn Layer<T>>> = vec![Box::new(Flatten::new())];
    let mut dim = in_features;
    for _ in 0..cfg.depth {
        layers.push(Box::new(Linear::new(dim, cfg.width, rng)));
        if cfg.batch_norm {
            layers.push(Box::new(BatchNorm::new(cfg.width)));
        }
        layers.push(act(cfg.activation));
        if cfg.dropout > 0.0 {
            layers.push(Box::new(Dropout::new(cfg.dropout)?));
        }
        dim = cfg.width;
    }
    layers.push(Box::new(Linear::new(dim, 1, rng)));
    Ok(Sequential::new(layers))
}

fn norm<T: Scalar>(cfg: &ResNetConfig, channels: usize) -> Option<Box<dyn Layer<T>>> {
    cfg.use_norm.then(|| -> Box<dyn Layer<T>> {
        match cfg.norm_type {
            NormType::Batch => Box::new(BatchNorm::new(channels)),
            NormType::Layer => Box::new(LayerNorm::new(channels)),
        }
    })
}

/// Residual stack over `(N, F, C_in)` inputs with convolutions along the
/// feature axis, mean pooling over that axis and a dense head.
///
/// Block `b` (1-based) outputs `BASE_FILTERS · 2^⌊(b-1)/increasefilter_gap⌋`
/// channels, and stride-2 pooling follows every block whose index is a
/// multiple of `downsample_gap`. A gap of 0 disables the feature.
pub fn build_resnet<T: Scalar>(
    cfg: &ResNetConfig,
    features: usize,
    in_channels: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Sequential<T>> {
    if cfg.num_block == 0 || cfg.num_linear == 0 || features == 0 || in_channels == 0 {
        return Err(Error::Config(format!(
            "invalid ResNet shape {cfg:?} for {features} features × {in_channels} channels"
        )));
    }
    let k = kernel_size(cfg.kernel_fraction, features);
    let mut layers: Vec<Box<dyn Layer<T>>> = Vec::new();
    let mut channels = in_channels;
    let mut length = features;
    for b in 1..=cfg.num_block {
        let doublings = if cfg.increasefilter_gap == 0 {
            0
        } else {
            (b - 1) / cfg.increasefilter_gap
        };
        let out = BASE_FILTERS << doublings;
        let dropout = if cfg.use_dropout {
            Some(Dropout::new(cfg.dropout_prob)?)
        } else {
            None
        };
        layers.push(Box::new(ResBlock {
            conv1: Conv1d::new(channels, out, k, rng),
            norm1: norm(cfg, out),
            act1: Activation::new(cfg.activation),
            dropout,
            conv2: Conv1d::new(out, out, k, rng),
            norm2: norm(cfg, out),
            shortcut: (channels != out).then(|| Conv1d::new(channels, out, 1, rng)),
            act_out: Activation::new(cfg.activation),
        }));
        channels = out;
        if cfg.downsample_gap > 0 && b % cfg.downsample_gap == 0 {
            length = Pool1d::output_len(length);
            if length == 0 {
                return Err(Error::Config(format!(
                    "pooling after block {b} shrinks the feature axis of length {features} below 1"
                )));
            }
            layers.push(Box::new(Pool1d::new(cfg.pooling)));
        }
    }
    layers.push(Box::new(MeanPool::new()));
    for _ in 1..cfg.num_linear {
        layers.push(Box::new(Linear::new(channels, channels, rng)));
        layers.push(act(cfg.activation));
    }
    layers.push(Box::new(Linear::new(channels, 1, rng)));
    Ok(Sequential::new(layers))
}

/// A layer stack producing one output per row.
pub struct Network<T> {
    pub body: Sequential<T>,
}

/// Rows per chunk during inference.
const PREDICT_CHUNK: usize = 2048;

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Box<dyn Layer<T>>>) -> Self {
        Self {
            body: Sequential::new(layers),
        }
    }

    /// Prepends an input embedding to an existing stack.
    pub fn with_embedding(embedding: Box<dyn Layer<T>>, body: Sequential<T>) -> Self {
        let mut layers = vec![embedding];
        layers.extend(body.layers);
        Self::new(layers)
    }

    /// Evaluation-mode outputs, one per row.
    pub fn predict(&mut self, x: &Tensor<T>) -> Result<Vec<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ctx = Ctx {
            training: false,
            rng: &mut rng,
        };
        let n = x.rows();
        let mut out = Vec::with_capacity(n);
        let mut start = 0;
        while start < n {
            let end = (start + PREDICT_CHUNK).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let y = self.body.forward(x.select_rows(&idx), &mut ctx)?;
            if y.len() != idx.len() {
                return Err(Error::Contract(format!("network output shape {:?} is not (N, 1)", y.shape)));
            }
            out.extend(y.data);
            start = end;
        }
        Ok(out)
    }
}

impl<T: Scalar> Layer<T> for Network<T> {
    fn forward(&mut self, x: Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        self.body.forward(x, ctx)
    }

    fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>> {
        self.body.backward(g)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.body.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Tensor<T>)) {
        self.body.visit_buffers(f);
    }
}
