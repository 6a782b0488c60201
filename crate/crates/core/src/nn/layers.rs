use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_shape, Ctx, Layer, Param, Tensor};
use crate::error::{Error, Result};
use crate::Scalar;

fn missing_cache() -> Error {
    Error::Contract("backward called without a matching forward".into())
}

fn uniform_param<T: Scalar>(shape: Vec<usize>, bound: f64, rng: &mut ChaCha8Rng) -> Param<T> {
    let count: usize = shape.iter().product();
    let data = (0..count)
        .map(|_| T::lit(rng.random_range(-bound..=bound)))
        .collect();
    Param::new(Tensor { shape, data })
}

fn zero_param<T: Scalar>(shape: Vec<usize>) -> Param<T> {
    Param::new(Tensor::zeros(shape))
}

/// Adds `bias` to every row of a row-major `rows × bias.len()` buffer.
fn broadcast_rows<T: Scalar>(rows: usize, bias: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * bias.len());
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    out
}

fn accumulate_col_sums<T: Scalar>(g: &[T], cols: usize, into: &mut [T]) {
    for row in g.chunks_exact(cols) {
        for (acc, &v) in into.iter_mut().zip(row) {
            *acc += v;
        }
    }
}

/// Affine map over the last axis: `y = x W + b` with `W` of shape `in × out`.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    /// Uniform initialization in `±1/sqrt(in)`.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Self {
            weight: uniform_param(vec![in_dim, out_dim], bound, rng),
            bias: uniform_param(vec![out_dim], bound, rng),
            input: None,
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: zero_param(vec![in_dim, out_dim]),
            bias: zero_param(vec![out_dim]),
            input: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.shape[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.shape[1]
    }
}

impl<T: Scalar> Layer<T> for Linear<T> {
    fn forward(&mut self, x: Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let (i, o) = (self.in_dim(), self.out_dim());
        if x.last_dim() != i || x.shape.len() < 2 {
            return Err(Error::Contract(format!(
                "linear layer expects last dim {i}, got shape {:?}",
                x.shape
            )));
        }
        let rows = x.len() / i;
        let mut out = broadcast_rows(rows, &self.bias.value.data);
        T::gemm(rows, i, o, T::one(), &x.data, false, &self.weight.value.data, false, T::one(), &mut out);
        let mut shape = x.shape.clone();
        *shape.last_mut().unwrap() = o;
        self.input = Some(x);
        Ok(Tensor { shape, data: out })
    }

    fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(missing_cache)?;
        let (i, o) = (self.in_dim(), self.out_dim());
        let rows = x.len() / i;
        if g.len() != rows * o {
            return Err(Error::Contract("linear gradient shape mismatch".into()));
        }
        T::gemm(i, rows, o, T::one(), &x.data, true, &g.data, false, T::one(), &mut self.weight.grad);
        accumulate_col_sums(&g.data, o, &mut self.bias.grad);
        let mut dx = vec![T::zero(); rows * i];
        T::gemm(rows, o, i, T::one(), &g.data, false, &self.weight.value.data, true, T::zero(), &mut dx);
        Ok(Tensor { shape: x.shape, data: dx })
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// Stride-1 convolution along the length axis of `(N, L, C_in)` inputs with
/// same-length zero padding (`(K-1)/2` on the left, the rest on the right).
#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    /// `(K·C_in) × C_out`, row index `k·C_in + c`.
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub kernel: usize,
    pub in_channels: usize,
    cols: Option<(Vec<T>, Vec<usize>)>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = kernel * in_channels;
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: uniform_param(vec![fan_in, out_channels], bound, rng),
            bias: uniform_param(vec![out_channels], bound, rng),
            kernel,
            in_channels,
            cols: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape[1]
    }

    pub fn zero(&mut self) {
        self.weight.value.data.iter_mut().for_each(|v| *v = T::zero());
        self.bias.value.data.iter_mut().for_each(|v| *v = T::zero());
    }

    fn pad_left(&self) -> usize {
        (self.kernel - 1) / 2
    }
}

impl<T: Scalar> Layer<T> for Conv1d<T> {
    fn forward(&mut self, x: Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        if x.shape.len() != 3 || x.shape[2] != self.in_channels {
            return Err(Error::Contract(format!(
                "conv1d expects (N, L, {}), got {:?}",
                self.in_channels, x.shape
            )));
        }
        let (n, l, c) = (x.shape[0], x.shape[1], x.shape[2]);
        let k = self.kernel;
        let width = k * c;
        let pad = self.pad_left() as isize;
        let mut col = vec![T::zero(); n * l * width];
        for b in 0..n {
            for pos in 0..l {
                let row = &mut col[(b * l + pos) * width..(b * l + pos + 1) * width];
                for t in 0..k {
                    let src = pos as isize + t as isize - pad;
                    if src >= 0 && (src as usize) < l {
                        let s = (b * l + src as usize) * c;
                        row[t * c..(t + 1) * c].copy_from_slice(&x.data[s..s + c]);
                    }
                }
            }
        }
        let o = self.out_channels();
        let mut out = broadcast_rows(n * l, &self.bias.value.data);
        T::gemm(n * l, width, o, T::one(), &col, false, &self.weight.value.data, false, T::one(), &mut out);
        self.cols = Some((col, x.shape));
        Ok(Tensor {
            shape: vec![n, l, o],
            data: out,
        })
    }

    fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>> {
        let (col, shape) = self.cols.take().ok_or_else(missing_cache)?;
        let (n, l, c) = (shape[0], shape[1], shape[2]);
        let o = self.out_channels();
        check_shape(&g.shape, &[n, l, o])?;
        let k = self.kernel;
        let width = k * c;
        T::gemm(width, n * l, o, T::one(), &col, true, &g.data, false, T::one(), &mut self.weight.grad);
        accumulate_col_sums(&g.data, o, &mut self.bias.grad);
        let mut dcol = col;
        T::gemm(n * l, o, width, T::one(), &g.data, false, &self.weight.value.data, true, T::zero(), &mut dcol);
        let pad = self.pad_left() as isize;
        let mut dx = vec![T::zero(); n * l * c];
        for b in 0..n {
            for pos in 0..l {
                let row = &dcol[(b * l + pos) * width..(b * l + pos + 1) * width];
                for t in 0..k {
                    let src = pos as isize + t as isize - pad;
                    if src >= 0 && (src as usize) < l {
                        let s = (b * l + src as usize) * c;
                        for (d, &v) in dx[s..s + c].iter_mut().zip(&row[t * c..(t + 1) * c]) {
                            *d += v;
                        }
                    }
                }
            }
        }
        Ok(Tensor { shape, data: dx })
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

const NORM_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

struct NormCache<T> {
    xhat: Vec<T>,
    /// One entry per normalized group (channel for batch norm, row for layer norm).
    inv_std: Vec<T>,
    shape: Vec<usize>,
    batch_stats: bool,
}

/// Batch normalization over the last axis; statistics pool every other axis.
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    cache: Option<NormCache<T>>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor {
                shape: vec![channels],
                data: vec![T::one(); channels],
            }),
            beta: zero_param(vec![channels]),
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor {
                shape: vec![channels],
                data: vec![T::one(); channels],
            },
            cache: None,
        }
    }

    fn channels(&self) -> usize {
        self.gamma.value.len()
    }
}

impl<T: Scalar> Layer<T> for BatchNorm<T> {
    fn forward(&mut self, x: Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let c = self.channels();
        if x.last_dim() != c || x.shape.len() < 2 {
            return Err(Error::Contract(format!("batch norm expects last dim {c}, got {:?}", x.shape)));
        }
        let rows = x.len() / c;
        let eps = T::lit(NORM_EPS);
        let (mean, var) = if ctx.training {
            let rf = T::lit(rows as f64);
            let mut mean = vec![T::zero(); c];
            accumulate_col_sums(&x.data, c, &mut mean);
            mean.iter_mut().for_each(|m| *m /= rf);
            let mut var = vec![T::zero(); c];
            for row in x.data.chunks_exact(c) {
                for j in 0..c {
                    let d = row[j] - mean[j];
                    var[j] += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v /= rf);
            let mom = T::lit(BN_MOMENTUM);
            let unbias = if rows > 1 { rf / (rf - T::one()) } else { T::one() };
            for j in 0..c {
                let rm = &mut self.running_mean.data[j];
                *rm = (T::one() - mom) * *rm + mom * mean[j];
                let rv = &mut self.running_var.data[j];
                *rv = (T::one() - mom) * *rv + mom * var[j] * unbias;
            }
            (mean, var)
        } else {
            (self.running_mean.data.clone(), self.running_var.data.clone())
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = x.data;
        for row in xhat.chunks_exact_mut(c) {
            for j in 0..c {
                row[j] = (row[j] - mean[j]) * inv_std[j];
            }
        }
        let mut out = xhat.clone();
        for row in out.chunks_exact_mut(c) {
            for j in 0..c {
                row[j] = self.gamma.value.data[j] * row[j] + self.beta.value.data[j];
            }
        }
        let shape = x.shape;
        self.cache = Some(NormCache {
            xhat,
            inv_std,
            shape: shape.clone(),
            batch_stats: ctx.training,
        });
        Ok(Tensor { shape, data: out })
    }

    fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(missing_cache)?;
        check_shape(&g.shape, &cache.shape)?;
        let c = self.channels();
        let rows = g.len() / c;
        let mut sum_g = vec![T::zero(); c];
        let mut sum_gx = vec![T::zero(); c];
        for (gr, xr) in g.data.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for j in 0..c {
                sum_g[j] += gr[j];
                sum_gx[j] += gr[j] * xr[j];
            }
        }
        for j in 0..c {
            self.gamma.grad[j] += sum_gx[j];
            self.beta.grad[j] += sum_g[j];
        }
        let mut dx = g.data;
        let rf = T::lit(rows as f64);
        for (dr, xr) in dx.chunks_exact_mut(c).zip(cache.xhat.chunks_exact(c)) {
            for j in 0..c {
                let scale = self.gamma.value.data[j] * cache.inv_std[j];
                dr[j] = if cache.batch_stats {
                    scale * (dr[j] - sum_g[j] / rf - xr[j] * sum_gx[j] / rf)
                } else {
                    scale * dr[j]
                };
            }
        }
        Ok(Tensor {
            shape: cache.shape,
            data: dx,
        })
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Tensor<T>)) {
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

/// Layer normalization over the last axis of each position.
pub struct LayerNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    cache: Option<NormCache<T>>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor {
                shape: vec![channels],
                data: vec![T::one(); channels],
            }),
            beta: zero_param(vec![channels]),
            cache: None,
        }
    }
}

impl<T: Scalar> Layer<T> for LayerNorm<T> {
    fn forward(&mut self, x: Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let c = self.gamma.value.len();
        if x.last_dim() != c || x.shape.len() < 2 {
            return Err(Error::Contract(format!("layer norm expects last dim {c}, got {:?}", x.shape)));
        }
        let cf = T::lit(c as f64);
        let eps = T::lit(NORM_EPS);
        let mut xhat = x.data;
        let mut inv_std = Vec::with_capacity(xhat.len() / c);
        for row in xhat.chunks_exact_mut(c) {
            let mean = row.iter().copied().sum::<T>() / cf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cf;
            let is = T::one() / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        let mut out = xhat.clone();
        for row in out.chunks_exact_mut(c) {
            for j in 0..c {
                row[j] = self.gamma.value.data[j] * row[j] + self.beta.value.data[j];
            }
        }
        let shape = x.shape;
        self.cache = Some(NormCache {
            xhat,
            inv_std,
            shape: shape.clone(),
            batch_stats: true,
        });
        Ok(Tensor { shape, data: out })
    }

    fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(missing_cache)?;
        check_shape(&g.shape, &cache.shape)?;
        let c = self.gamma.value.len();
        let cf = T::lit(c as f64);
        let mut dx = g.data;
        for (r, (dr, xr)) in dx.chunks_exact_mut(c).zip(cache.xhat.chunks_exact(c)).enumerate() {
            let mut sum_d = T::zero();
            let mut sum_dx = T::zero();
            for j in 0..c {
                self.gamma.grad[j] += dr[j] * xr[j];
                self.beta.grad[j] += dr[j];
                let d = dr[j] * self.gamma.value.data[j];
                sum_d += d;
                sum_dx += d * xr[j];
            }
            let is = cache.inv_std[r];
            for j in 0..c {
                let d = dr[j] * self.gamma.value.data[j];
                dr[j] = is * (d - sum_d / cf - xr[j] * sum_dx / cf);
            }
        }
        Ok(Tensor {
            shape: cache.shape,
            data: dx,
        })
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActivationKind {
    ReLU,
    LeakyReLU,
}

pub const LEAKY_SLOPE: f64 = 0.01;

pub struct Activation<T> {
    pub kind: ActivationKind,
    mask: Option<(Vec<bool>, Vec<usize>)>,
    _t: std::marker::PhantomData<T>,
}

impl<T: Scalar> Activation<T> {
    pub fn new(kind: ActivationKind) -> Self {
        Self {
            kind,
            mask: None,
            _t: std::marker::PhantomData,
        }
    }

    fn negative_slope(&self) -> T {
        match self.kind {
            ActivationKind::ReLU => T::zero(),
            ActivationKind::LeakyReLU => T::lit(LEAKY_SLOPE),
        }
    }
}

impl<T: Scalar> Layer<T> for Activation<T> {
    fn forward(&mut self, mut x: Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let slope = self.negative_slope();
        let mask: Vec<bool> = x.data.iter().map(|&v| v > T::zero()).collect();
        for (v, &pos) in x.data.iter_mut().zip(&mask) {
            if !pos {
                *v *= slope;
            }
        }
        self.mask = Some((mask, x.shape.clone()));
        Ok(x)
    }

    fn backward(&mut self, mut g: Tensor<T>) -> Result<Tensor<T>> {
        let (mask, shape) = self.mask.take().ok_or_else(missing_cache)?;
        check_shape(&g.shape, &shape)?;
        let slope = self.negative_slope();
        for (v, &pos) in g.data.iter_mut().zip(&mask) {
            if !pos {
                *v *= slope;
            }
        }
        Ok(g)
    }
}

/// Inverted dropout: kept units are scaled by `1/(1-p)` during training.
pub struct Dropout<T> {
    pub p: f64,
    mask: Option<Vec<T>>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability must be in [0, 1), got {p}")));
        }
        Ok(Self { p, mask: None })
    }
}

impl<T: Scalar> Layer<T> for Dropout<T> {
    fn forward(&mut self, mut x: Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        if !ctx.training || self.p == 0.0 {
            self.mask = None;
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - self.p));
        let mask: Vec<T> = (0..x.len())
            .map(|_| if ctx.rng.random::<f64>() < self.p { T::zero() } else { keep })
            .collect();
        for (v, &m) in x.data.iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(mask);
        Ok(x)
    }

    fn backward(&mut self, mut g: Tensor<T>) -> Result<Tensor<T>> {
        if let Some(mask) = self.mask.take() {
            if mask.len() != g.len() {
                return Err(Error::Contract("dropout gradient shape mismatch".into()));
            }
            for (v, &m) in g.data.iter_mut().zip(&mask) {
                *v *= m;
            }
        }
        Ok(g)
    }
}

/// Mean over the length axis: `(N, L, C) → (N, C)`.
pub struct MeanPool {
    shape: Option<Vec<usize>>,
}

impl MeanPool {
    pub fn new() -> Self {
        Self { shape: None }
    }
}

impl Default for MeanPool {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Layer<T> for MeanPool {
    fn forward(&mut self, x: Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        if x.shape.len() != 3 {
            return Err(Error::Contract(format!("mean pool expects (N, L, C), got {:?}", x.shape)));
        }
        let (n, l, c) = (x.shape[0], x.shape[1], x.shape[2]);
        let lf = T::lit(l as f64);
        let mut out = vec![T::zero(); n * c];
        for b in 0..n {
            let dst = &mut out[b * c..(b + 1) * c];
            accumulate_col_sums(&x.data[b * l * c..(b + 1) * l * c], c, dst);
            dst.iter_mut().for_each(|v| *v /= lf);
        }
        self.shape = Some(x.shape);
        Ok(Tensor {
            shape: vec![n, c],
            data: out,
        })
    }

    fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.shape.take().ok_or_else(missing_cache)?;
        let (n, l, c) = (shape[0], shape[1], shape[2]);
        check_shape(&g.shape, &[n, c])?;
        let lf = T::lit(l as f64);
        let mut dx = Vec::with_capacity(n * l * c);
        for b in 0..n {
            for _ in 0..l {
                dx.extend(g.data[b * c..(b + 1) * c].iter().map(|&v| v / lf));
            }
        }
        Ok(Tensor { shape, data: dx })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolKind {
    MaxPooling,
    AvgPooling,
}

/// Window-2, stride-2 pooling along the length axis; an odd trailing
/// position is dropped.
pub struct Pool1d {
    pub kind: PoolKind,
    cache: Option<(Vec<usize>, Vec<u8>)>,
}

impl Pool1d {
    pub fn new(kind: PoolKind) -> Self {
        Self { kind, cache: None }
    }

    pub fn output_len(l: usize) -> usize {
        l / 2
    }
}

impl<T: Scalar> Layer<T> for Pool1d {
    fn forward(&mut self, x: Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        if x.shape.len() != 3 {
            return Err(Error::Contract(format!("pooling expects (N, L, C), got {:?}", x.shape)));
        }
        let (n, l, c) = (x.shape[0], x.shape[1], x.shape[2]);
        let lo = Self::output_len(l);
        if lo == 0 {
            return Err(Error::Config(format!("pooling would shrink length {l} below 1")));
        }
        let half = T::lit(0.5);
        let mut out = vec![T::zero(); n * lo * c];
        let mut arg = vec![0u8; if self.kind == PoolKind::MaxPooling { n * lo * c } else { 0 }];
        for b in 0..n {
            for p in 0..lo {
                let a = (b * l + 2 * p) * c;
                let z = a + c;
                let o = (b * lo + p) * c;
                for j in 0..c {
                    let (u, v) = (x.data[a + j], x.data[z + j]);
                    out[o + j] = match self.kind {
                        PoolKind::MaxPooling => {
                            if v > u {
                                arg[o + j] = 1;
                                v
                            } else {
                                u
                            }
                        }
                        PoolKind::AvgPooling => (u + v) * half,
                    };
                }
            }
        }
        self.cache = Some((x.shape, arg));
        Ok(Tensor {
            shape: vec![n, lo, c],
            data: out,
        })
    }

    fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>> {
        let (shape, arg) = self.cache.take().ok_or_else(missing_cache)?;
        let (n, l, c) = (shape[0], shape[1], shape[2]);
        let lo = Self::output_len(l);
        check_shape(&g.shape, &[n, lo, c])?;
        let half = T::lit(0.5);
        let mut dx = vec![T::zero(); n * l * c];
        for b in 0..n {
            for p in 0..lo {
                let a = (b * l + 2 * p) * c;
                let o = (b * lo + p) * c;
                for j in 0..c {
                    let gv = g.data[o + j];
                    match self.kind {
                        PoolKind::MaxPooling => dx[a + arg[o + j] as usize * c + j] += gv,
                        PoolKind::AvgPooling => {
                            dx[a + j] += gv * half;
                            dx[a + c + j] += gv * half;
                        }
                    }
                }
            }
        }
        Ok(Tensor { shape, data: dx })
    }
}

/// `(N, ...) → (N, prod(...))`.
pub struct Flatten {
    shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self { shape: None }
    }
}

impl Default for Flatten {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Layer<T> for Flatten {
    fn forward(&mut self, x: Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let shape = vec![x.rows(), x.row_len()];
        self.shape = Some(x.shape.clone());
        x.reshape(shape)
    }

    fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.shape.take().ok_or_else(missing_cache)?;
        g.reshape(shape)
    }
}

/// Layers applied in order.
pub struct Sequential<T> {
    pub layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Box<dyn Layer<T>>>) -> Self {
        Self { layers }
    }
}

impl<T: Scalar> Layer<T> for Sequential<T> {
    fn forward(&mut self, mut x: Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        for layer in &mut self.layers {
            x = layer.forward(x, ctx)?;
        }
        Ok(x)
    }

    fn backward(&mut self, mut g: Tensor<T>) -> Result<Tensor<T>> {
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(g)?;
        }
        Ok(g)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        for layer in &mut self.layers {
            layer.visit_params(f);
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Tensor<T>)) {
        for layer in &mut self.layers {
            layer.visit_buffers(f);
        }
    }
}

/// `act(norm(conv(drop(act(norm(conv(x)))))) + shortcut(x))`, where the
/// shortcut is a 1×1 convolution when the channel count changes.
pub struct ResBlock<T> {
    pub conv1: Conv1d<T>,
    pub norm1: Option<Box<dyn Layer<T>>>,
    pub act1: Activation<T>,
    pub dropout: Option<Dropout<T>>,
    pub conv2: Conv1d<T>,
    pub norm2: Option<Box<dyn Layer<T>>>,
    pub shortcut: Option<Conv1d<T>>,
    pub act_out: Activation<T>,
}

impl<T: Scalar> Layer<T> for ResBlock<T> {
    fn forward(&mut self, x: Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let skip = match &mut self.shortcut {
            Some(proj) => proj.forward(x.clone(), ctx)?,
            None => x.clone(),
        };
        let mut h = self.conv1.forward(x, ctx)?;
        if let Some(n) = &mut self.norm1 {
            h = n.forward(h, ctx)?;
        }
        h = self.act1.forward(h, ctx)?;
        if let Some(d) = &mut self.dropout {
            h = d.forward(h, ctx)?;
        }
        h = self.conv2.forward(h, ctx)?;
        if let Some(n) = &mut self.norm2 {
            h = n.forward(h, ctx)?;
        }
        h.add_assign(&skip)?;
        self.act_out.forward(h, ctx)
    }

    fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>> {
        let g = self.act_out.backward(g)?;
        let mut skip_grad = match &mut self.shortcut {
            Some(proj) => proj.backward(g.clone())?,
            None => g.clone(),
        };
        let mut h = g;
        if let Some(n) = &mut self.norm2 {
            h = n.backward(h)?;
        }
        h = self.conv2.backward(h)?;
        if let Some(d) = &mut self.dropout {
            h = d.backward(h)?;
        }
        h = self.act1.backward(h)?;
        if let Some(n) = &mut self.norm1 {
            h = n.backward(h)?;
        }
        h = self.conv1.backward(h)?;
        skip_grad.add_assign(&h)?;
        Ok(skip_grad)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.conv1.visit_params(f);
        if let Some(n) = &mut self.norm1 {
            n.visit_params(f);
        }
        self.conv2.visit_params(f);
        if let Some(n) = &mut self.norm2 {
            n.visit_params(f);
        }
        if let Some(s) = &mut self.shortcut {
            s.visit_params(f);
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Tensor<T>)) {
        if let Some(n) = &mut self.norm1 {
            n.visit_buffers(f);
        }
        if let Some(n) = &mut self.norm2 {
            n.visit_buffers(f);
        }
    }
}
