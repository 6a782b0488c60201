//! Learned Fourier feature embeddings: an affine map of each numerical input
//! followed by `cos(πz) ⊕ sin(πz)` along the channel axis.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Ctx, Layer, Param, Tensor};
use crate::Scalar;

pub const LFF_DIMS: [usize; 4] = [32, 64, 128, 256];
pub const DEFAULT_INIT_SIGMA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LffVariant {
    /// One `M`-vector weight and bias shared by every feature.
    #[serde(rename = "Conv1x1LFF")]
    Conv1x1,
    /// A dense `(D·M) × D` map that mixes features.
    #[serde(rename = "LinearLFF")]
    Linear,
}

/// Fourier embedding layer from `(N, D)` to `(N, D, 2M)`.
pub struct Lff<T> {
    pub variant: LffVariant,
    pub d: usize,
    pub m: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<(Tensor<T>, Vec<T>)>,
}

/// Seeded initialization restricted to the supported embedding sizes.
pub fn init_lff<T: Scalar>(variant: LffVariant, d: usize, m: usize, sigma: f64, seed: u64) -> Result<Lff<T>> {
    if !LFF_DIMS.contains(&m) {
        return Err(Error::Config(format!("lff dim {m} not in {LFF_DIMS:?}")));
    }
    Lff::new(variant, d, m, sigma, &mut ChaCha8Rng::seed_from_u64(seed))
}

impl<T: Scalar> Lff<T> {
    /// Weights drawn i.i.d. from `N(0, σ²)`, bias zero.
    pub fn new(variant: LffVariant, d: usize, m: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::Config(format!("lff needs D ≥ 1 and M ≥ 1, got D={d} M={m}")));
        }
        let normal = Normal::new(0.0, sigma)
            .map_err(|_| Error::Config(format!("lff init sigma must be finite and ≥ 0, got {sigma}")))?;
        let (wshape, bshape) = match variant {
            LffVariant::Conv1x1 => (vec![m, 1], vec![m]),
            LffVariant::Linear => (vec![d * m, d], vec![d * m]),
        };
        let count: usize = wshape.iter().product();
        let w = (0..count).map(|_| T::lit(normal.sample(rng))).collect();
        Ok(Self {
            variant,
            d,
            m,
            weight: Param::new(Tensor::new(wshape, w)?),
            bias: Param::new(Tensor::zeros(bshape)),
            cache: None,
        })
    }

    pub fn out_channels(&self) -> usize {
        2 * self.m
    }

    /// Pre-activation `z` laid out as `(N, D, M)`.
    fn affine(&self, x: &Tensor<T>) -> Vec<T> {
        let (n, d, m) = (x.rows(), self.d, self.m);
        let (w, b) = (&self.weight.value.data, &self.bias.value.data);
        match self.variant {
            LffVariant::Conv1x1 => {
                let mut z = Vec::with_capacity(n * d * m);
                for &v in &x.data {
                    z.extend(w.iter().zip(b).map(|(&wk, &bk)| wk * v + bk));
                }
                z
            }
            LffVariant::Linear => {
                let mut z: Vec<T> = b.iter().copied().cycle().take(n * d * m).collect();
                T::gemm(n, d, d * m, T::one(), &x.data, false, w, true, T::one(), &mut z);
                z
            }
        }
    }
}

impl<T: Scalar> Layer<T> for Lff<T> {
    fn forward(&mut self, x: Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        if x.shape.len() != 2 || x.shape[1] != self.d {
            return Err(Error::Contract(format!("lff expects (N, {}), got {:?}", self.d, x.shape)));
        }
        let (n, d, m) = (x.rows(), self.d, self.m);
        let z = self.affine(&x);
        let pi = T::lit(PI);
        let mut out = Vec::with_capacity(n * d * 2 * m);
        for slot in z.chunks_exact(m) {
            out.extend(slot.iter().map(|&v| (pi * v).cos()));
            out.extend(slot.iter().map(|&v| (pi * v).sin()));
        }
        self.cache = Some((x, z));
        Tensor::new(vec![n, d, 2 * m], out)
    }

    fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>> {
        let (x, z) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Contract("lff backward without forward".into()))?;
        let (n, d, m) = (x.rows(), self.d, self.m);
        if g.shape != [n, d, 2 * m] {
            return Err(Error::Contract(format!(
                "lff gradient shape {:?}, expected {:?}",
                g.shape,
                [n, d, 2 * m]
            )));
        }
        let pi = T::lit(PI);
        let mut dz = Vec::with_capacity(z.len());
        for (zs, gs) in z.chunks_exact(m).zip(g.data.chunks_exact(2 * m)) {
            let (gc, gsin) = gs.split_at(m);
            dz.extend(
                zs.iter()
                    .zip(gc.iter().zip(gsin))
                    .map(|(&v, (&a, &b))| pi * ((pi * v).cos() * b - (pi * v).sin() * a)),
            );
        }
        let mut dx = vec![T::zero(); n * d];
        match self.variant {
            LffVariant::Conv1x1 => {
                let w = &self.weight.value.data;
                for ((&xv, dzs), dxv) in x.data.iter().zip(dz.chunks_exact(m)).zip(dx.iter_mut()) {
                    for k in 0..m {
                        self.weight.grad[k] += dzs[k] * xv;
                        self.bias.grad[k] += dzs[k];
                        *dxv += dzs[k] * w[k];
                    }
                }
            }
            LffVariant::Linear => {
                let dm = d * m;
                T::gemm(dm, n, d, T::one(), &dz, true, &x.data, false, T::one(), &mut self.weight.grad);
                for row in dz.chunks_exact(dm) {
                    for (bg, &v) in self.bias.grad.iter_mut().zip(row) {
                        *bg += v;
                    }
                }
                T::gemm(n, dm, d, T::one(), &dz, false, &self.weight.value.data, false, T::zero(), &mut dx);
            }
        }
        Tensor::new(vec![n, d], dx)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// Embeds an encoded `(N, D, C)` tensor: categorical slots are copied as-is,
/// numerical columns (channel 0) pass through an LFF. The output lists the
/// categorical features first, then the numerical ones, each zero-padded to
/// `max(2M, C)` channels.
pub struct CombinedEmbedding<T> {
    pub categorical: Vec<usize>,
    pub numerical: Vec<usize>,
    pub in_channels: usize,
    pub width: usize,
    pub lff: Option<Lff<T>>,
    rows: usize,
}

impl<T: Scalar> CombinedEmbedding<T> {
    pub fn new(
        categorical_flags: &[bool],
        in_channels: usize,
        variant: LffVariant,
        m: usize,
        sigma: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let categorical: Vec<usize> = (0..categorical_flags.len()).filter(|&j| categorical_flags[j]).collect();
        let numerical: Vec<usize> = (0..categorical_flags.len()).filter(|&j| !categorical_flags[j]).collect();
        if categorical_flags.is_empty() || in_channels == 0 {
            return Err(Error::Config("embedding needs at least one feature and channel".into()));
        }
        let lff = if numerical.is_empty() {
            None
        } else {
            Some(Lff::new(variant, numerical.len(), m, sigma, rng)?)
        };
        let mut width = lff.as_ref().map_or(0, Lff::out_channels);
        if !categorical.is_empty() {
            width = width.max(in_channels);
        }
        Ok(Self {
            categorical,
            numerical,
            in_channels,
            width,
            lff,
            rows: 0,
        })
    }

    pub fn features(&self) -> usize {
        self.categorical.len() + self.numerical.len()
    }
}

impl<T: Scalar> Layer<T> for CombinedEmbedding<T> {
    fn forward(&mut self, x: Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let (d, c, w) = (self.features(), self.in_channels, self.width);
        if x.shape.len() != 3 || x.shape[1] != d || x.shape[2] != c {
            return Err(Error::Contract(format!("embedding expects (N, {d}, {c}), got {:?}", x.shape)));
        }
        let n = x.rows();
        let mut out = vec![T::zero(); n * d * w];
        for i in 0..n {
            for (slot, &j) in self.categorical.iter().enumerate() {
                let src = &x.data[(i * d + j) * c..(i * d + j + 1) * c];
                out[(i * d + slot) * w..(i * d + slot) * w + c].copy_from_slice(src);
            }
        }
        if let Some(lff) = self.lff.as_mut() {
            let dn = self.numerical.len();
            let mut num = Vec::with_capacity(n * dn);
            for i in 0..n {
                num.extend(self.numerical.iter().map(|&j| x.data[(i * d + j) * c]));
            }
            let e = lff.forward(Tensor::new(vec![n, dn], num)?, ctx)?;
            let wm = lff.out_channels();
            let offset = self.categorical.len();
            for i in 0..n {
                for k in 0..dn {
                    let dst = (i * d + offset + k) * w;
                    out[dst..dst + wm].copy_from_slice(&e.data[(i * dn + k) * wm..(i * dn + k + 1) * wm]);
                }
            }
        }
        self.rows = n;
        Tensor::new(vec![n, d, w], out)
    }

    /// Input gradients are not propagated: the encoded input is data.
    fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>> {
        let (n, d, w) = (self.rows, self.features(), self.width);
        if g.shape != [n, d, w] {
            return Err(Error::Contract(format!("embedding gradient shape {:?}", g.shape)));
        }
        if let Some(lff) = self.lff.as_mut() {
            let (dn, wm, offset) = (self.numerical.len(), lff.out_channels(), self.categorical.len());
            let mut ge = Vec::with_capacity(n * dn * wm);
            for i in 0..n {
                for k in 0..dn {
                    let src = (i * d + offset + k) * w;
                    ge.extend_from_slice(&g.data[src..src + wm]);
                }
            }
            lff.backward(Tensor::new(vec![n, dn, wm], ge)?)?;
        }
        Ok(Tensor::zeros(vec![n, d, self.in_channels]))
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        if let Some(lff) = self.lff.as_mut() {
            lff.visit_params(f);
        }
    }
}
