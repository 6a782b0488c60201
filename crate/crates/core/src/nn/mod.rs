//! Minimal reverse-mode layer library: tensors, layers with hand-written
//! backward passes, the MLP and 1D-convolutional ResNet backbones, losses,
//! AdamW with cosine warm restarts, and the early-stopping training loop.

mod layers;
mod loss;
mod models;
mod optim;
mod snapshot;
mod train;

pub use layers::{
    Activation, ActivationKind, BatchNorm, Conv1d, Dropout, Flatten, LayerNorm, Linear, MeanPool, Pool1d, PoolKind,
    ResBlock, Sequential,
};
pub use loss::{bce_with_logits, loss_and_grad, mse, Loss};
pub use models::{
    build_mlp, build_resnet, kernel_size, MlpConfig, Network, NormType, ResNetConfig, BASE_FILTERS,
};
pub use optim::{
    cosine_warm_restart_lr, zero_grads, AdamW, OptimizerConfig, ADAM_BETA1, ADAM_BETA2, T0_CHOICES, T_MULT_CHOICES,
};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};
pub use train::{
    fit, minibatches, Criterion, EarlyStopping, EpochReport, StopReason, SupervisedData, SupervisedTrainer, TargetCoding,
    TrainState, Trainable, DEFAULT_BATCH_SIZE, MAX_EPOCHS, PATIENCE,
};

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::Scalar;

/// Dense row-major tensor. The first axis is the batch axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::Contract(format!(
                "shape {shape:?} needs {count} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let count = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); count],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the batch axis.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Number of values per batch entry.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    /// Size of the last axis.
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let w = self.row_len();
        let mut data = Vec::with_capacity(idx.len() * w);
        for &i in idx {
            data.extend_from_slice(&self.data[i * w..(i + 1) * w]);
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Self { shape, data }
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Contract(format!(
                "cannot reshape {:?} to {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        check_shape(&self.shape, &other.shape)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

pub(crate) fn check_shape(have: &[usize], want: &[usize]) -> Result<()> {
    if have != want {
        return Err(Error::Contract(format!("shape mismatch: {have:?} vs {want:?}")));
    }
    Ok(())
}

/// Trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = vec![T::zero(); value.len()];
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Per-call forward context.
pub struct Ctx<'a> {
    pub training: bool,
    pub rng: &'a mut ChaCha8Rng,
}

/// A differentiable map with cached forward state.
///
/// `backward` must follow the matching `forward`; it accumulates parameter
/// gradients and returns the gradient with respect to the layer input.
pub trait Layer<T: Scalar>: Send {
    fn forward(&mut self, x: Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>>;

    fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>>;

    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Param<T>)) {}

    /// Non-trainable state that must be saved with the parameters.
    fn visit_buffers(&mut self, _f: &mut dyn FnMut(&mut Tensor<T>)) {}
}

/// Number of trainable scalars in a layer.
pub fn param_count<T: Scalar>(layer: &mut dyn Layer<T>) -> usize {
    let mut n = 0;
    layer.visit_params(&mut |p| n += p.value.len());
    n
}
