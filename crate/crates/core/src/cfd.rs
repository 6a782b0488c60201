//! Channel encoding of tabular rows: categorical columns become zero-padded
//! one-hot vectors, numerical columns become `[x, 0, ..., 0]`, all with a
//! common channel depth `M`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix, Standardizer};
use crate::error::{Error, Result};
use crate::stats::Categories;
use crate::Scalar;

/// Value-to-code table of one categorical column, fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMap {
    pub column: usize,
    pub categories: Categories<f64>,
}

impl BinMap {
    pub fn bins(&self) -> usize {
        self.categories.len()
    }
}

/// Fits one [`BinMap`] per selected column from the training rows. With
/// `max_bins` set, a column exceeding it is a contract violation.
pub fn fit_binmaps(ds: &Dataset, icf_set: &[usize], max_bins: Option<usize>) -> Result<Vec<BinMap>> {
    let train = ds.indices(crate::data::Split::Train);
    let mut maps = Vec::with_capacity(icf_set.len());
    let mut cols = icf_set.to_vec();
    cols.sort_unstable();
    cols.dedup();
    for j in cols {
        if j >= ds.n_cols() {
            return Err(Error::Contract(format!("categorical column {j} out of range")));
        }
        let values: Vec<f64> = train.iter().map(|&i| ds.x.get(i, j)).collect();
        let categories = Categories::fit(&values);
        if let Some(limit) = max_bins {
            if categories.len() > limit {
                return Err(Error::Contract(format!(
                    "column {j} has {} categories, above the gate maximum {limit}",
                    categories.len()
                )));
            }
        }
        maps.push(BinMap { column: j, categories });
    }
    Ok(maps)
}

/// Channel depth needed for the given bin maps.
pub fn channel_depth(binmaps: &[BinMap], append_raw: bool) -> usize {
    let m = binmaps.iter().map(BinMap::bins).max().unwrap_or(1).max(1);
    if append_raw && !binmaps.is_empty() {
        m + 1
    } else {
        m
    }
}

/// `N × D × M` tensor, row-major over (row, feature, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTensor<T> {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub data: Vec<T>,
    /// Whether each feature slot holds a categorical encoding.
    pub categorical: Vec<bool>,
}

impl<T: Scalar> EncodedTensor<T> {
    pub fn zeros(n: usize, d: usize, m: usize, categorical: Vec<bool>) -> Self {
        Self {
            n,
            d,
            m,
            data: vec![T::zero(); n * d * m],
            categorical,
        }
    }

    pub fn slot(&self, row: usize, feature: usize) -> &[T] {
        let start = (row * self.d + feature) * self.m;
        &self.data[start..start + self.m]
    }

    fn slot_mut(&mut self, row: usize, feature: usize) -> &mut [T] {
        let start = (row * self.d + feature) * self.m;
        &mut self.data[start..start + self.m]
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let stride = self.d * self.m;
        let mut data = Vec::with_capacity(idx.len() * stride);
        for &i in idx {
            data.extend_from_slice(&self.data[i * stride..(i + 1) * stride]);
        }
        Self {
            n: idx.len(),
            d: self.d,
            m: self.m,
            data,
            categorical: self.categorical.clone(),
        }
    }
}

/// Reshapes to `N × (D·M)` keeping the (feature, channel) order.
pub fn flatten<T: Scalar>(t: EncodedTensor<T>) -> Matrix<T> {
    let cols = t.d * t.m;
    Matrix::new(t.n, cols, t.data).expect("tensor size matches its shape")
}

/// Encodes raw rows. Numerical columns are standardized when a standardizer
/// is given. With `append_raw`, categorical slots carry the standardized raw
/// value in channel 0 and the one-hot code shifted by one.
pub fn encode<T: Scalar>(
    x: &Matrix<f64>,
    binmaps: &[BinMap],
    m: usize,
    standardizer: Option<&Standardizer>,
    append_raw: bool,
) -> Result<EncodedTensor<T>> {
    let offset = usize::from(append_raw);
    let needed = binmaps.iter().map(|b| b.bins() + offset).max().unwrap_or(1).max(1);
    if m < needed {
        return Err(Error::Contract(format!("channel depth {m} below required {needed}")));
    }
    let mut maps: Vec<Option<&BinMap>> = vec![None; x.cols()];
    for b in binmaps {
        if b.column >= x.cols() {
            return Err(Error::Contract(format!("bin map for missing column {}", b.column)));
        }
        maps[b.column] = Some(b);
    }
    let scale = |j: usize, v: f64| standardizer.map_or(v, |s| s.apply(j, v));
    let categorical = maps.iter().map(Option::is_some).collect();
    let mut out = EncodedTensor::zeros(x.rows(), x.cols(), m, categorical);
    for i in 0..x.rows() {
        for (j, map) in maps.iter().enumerate() {
            let v = x.get(i, j);
            let slot = out.slot_mut(i, j);
            match map {
                None => slot[0] = T::lit(scale(j, v)),
                Some(b) => {
                    if append_raw {
                        slot[0] = T::lit(scale(j, v));
                    }
                    if let Some(c) = b.categories.code(v) {
                        slot[offset + c] = T::one();
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Bin maps, depth and feature scaling fitted on a dataset's training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CfdEncoder {
    pub binmaps: Vec<BinMap>,
    pub depth: usize,
    pub append_raw: bool,
    pub standardizer: Standardizer,
}

impl CfdEncoder {
    pub fn fit(ds: &Dataset, icf_set: &[usize], append_raw: bool) -> Result<Self> {
        let binmaps = fit_binmaps(ds, icf_set, None)?;
        let depth = channel_depth(&binmaps, append_raw);
        let (train, _) = ds.train_rows();
        Ok(Self {
            binmaps,
            depth,
            append_raw,
            standardizer: Standardizer::fit(&train),
        })
    }

    pub fn encode<T: Scalar>(&self, x: &Matrix<f64>) -> Result<EncodedTensor<T>> {
        encode(x, &self.binmaps, self.depth, Some(&self.standardizer), self.append_raw)
    }
}

const TENSOR_MAGIC: &[u8; 4] = b"ICFT";

/// Writes `magic, N, D, M (u64 LE), layout bitmap (LSB-first), f32 LE payload`.
pub fn write_tensor<T: Scalar, W: Write>(t: &EncodedTensor<T>, mut w: W) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    for v in [t.n, t.d, t.m] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    let mut bitmap = vec![0u8; t.d.div_ceil(8)];
    for (j, &c) in t.categorical.iter().enumerate() {
        if c {
            bitmap[j / 8] |= 1 << (j % 8);
        }
    }
    w.write_all(&bitmap)?;
    let mut buf = Vec::with_capacity(t.data.len() * 4);
    for v in &t.data {
        buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<EncodedTensor<f32>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Format("not an encoded tensor file".into()));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        *d = usize::try_from(u64::from_le_bytes(b))
            .map_err(|_| Error::Format("tensor dimension overflows".into()))?;
    }
    let [n, d, m] = dims;
    let count = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(m))
        .ok_or_else(|| Error::Format("tensor size overflows".into()))?;
    let mut bitmap = vec![0u8; d.div_ceil(8)];
    r.read_exact(&mut bitmap)?;
    let categorical = (0..d).map(|j| bitmap[j / 8] >> (j % 8) & 1 == 1).collect();
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != count * 4 {
        return Err(Error::Format(format!(
            "tensor payload has {} bytes, expected {}",
            payload.len(),
            count * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(EncodedTensor {
        n,
        d,
        m,
        data,
        categorical,
    })
}
