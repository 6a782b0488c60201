//! Tabular datasets: ingestion, seeded splits, feature and target transforms,
//! evaluation metrics and the synthetic generators used for testing.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::norm_ppf;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Contract(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numerical,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub declared_kind: ColumnKind,
    /// Distinct values among training rows.
    pub cardinality: usize,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Sidecar descriptor for a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub target: String,
    pub task: Task,
    #[serde(default)]
    pub categorical: Vec<String>,
}

impl Schema {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("invalid schema: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Column-typed table with a binary or real target and a per-row split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub id: String,
    pub x: Matrix<f64>,
    pub y: Vec<f64>,
    pub task: Task,
    pub columns: Vec<ColumnMeta>,
    pub split: Vec<Split>,
}

impl Dataset {
    /// Builds a dataset with every row assigned to the training split.
    pub fn new(
        id: impl Into<String>,
        x: Matrix<f64>,
        y: Vec<f64>,
        task: Task,
        names: Vec<String>,
        kinds: Vec<ColumnKind>,
    ) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::Data("dataset needs at least one row and one column".into()));
        }
        if y.len() != x.rows() {
            return Err(Error::Data(format!(
                "target has {} values for {} rows",
                y.len(),
                x.rows()
            )));
        }
        if names.len() != x.cols() || kinds.len() != x.cols() {
            return Err(Error::Schema("column metadata does not match matrix width".into()));
        }
        if let Some(v) = x.as_slice().iter().chain(&y).find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value {v} in dataset")));
        }
        if task == Task::Classification {
            if let Some(v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::Data(format!(
                    "classification targets must be 0 or 1, found {v}"
                )));
            }
        }
        let columns = names
            .into_iter()
            .zip(kinds)
            .enumerate()
            .map(|(index, (name, declared_kind))| ColumnMeta {
                name,
                declared_kind,
                cardinality: 0,
                index,
            })
            .collect();
        let n = x.rows();
        let mut ds = Self {
            id: id.into(),
            x,
            y,
            task,
            columns,
            split: vec![Split::Train; n],
        };
        ds.refit_cardinality();
        Ok(ds)
    }

    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.cols()
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.split[i] == which).collect()
    }

    /// Explicitly annotated categorical columns.
    pub fn declared_categorical(&self) -> Vec<usize> {
        self.columns
            .iter()
            .filter(|c| c.declared_kind == ColumnKind::Categorical)
            .map(|c| c.index)
            .collect()
    }

    /// Training rows as `(X, y)`.
    pub fn train_rows(&self) -> (Matrix<f64>, Vec<f64>) {
        self.rows_of(&self.indices(Split::Train))
    }

    pub fn rows_of(&self, idx: &[usize]) -> (Matrix<f64>, Vec<f64>) {
        (self.x.select_rows(idx), idx.iter().map(|&i| self.y[i]).collect())
    }

    fn refit_cardinality(&mut self) {
        let train = self.indices(Split::Train);
        for col in &mut self.columns {
            let distinct: BTreeSet<u64> = train
                .iter()
                .map(|&i| canonical_bits(self.x.get(i, col.index)))
                .collect();
            col.cardinality = distinct.len().max(1);
        }
    }

    /// Writes the dataset as CSV (features in column order, then the target).
    pub fn write_csv<W: Write>(&self, w: W, target: &str) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        header.push(target);
        wr.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.y[i].to_string());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Schema describing this dataset for a given target column name.
    pub fn schema(&self, target: &str) -> Schema {
        Schema {
            target: target.to_string(),
            task: self.task,
            categorical: self
                .columns
                .iter()
                .filter(|c| c.declared_kind == ColumnKind::Categorical)
                .map(|c| c.name.clone())
                .collect(),
        }
    }
}

fn canonical_bits(v: f64) -> u64 {
    // -0.0 and 0.0 are the same category
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

/// Reads a CSV file with a header row using the given schema.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let file = std::fs::File::open(path)?;
    read_csv(file, schema, id)
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema, id: impl Into<String>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();

    let mut seen = BTreeSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::Schema(format!("duplicate column `{h}`")));
        }
    }
    let target_pos = header
        .iter()
        .position(|h| *h == schema.target)
        .ok_or_else(|| Error::Schema(format!("target column `{}` not found", schema.target)))?;
    for c in &schema.categorical {
        if c == &schema.target {
            return Err(Error::Schema(format!("target `{c}` listed as categorical feature")));
        }
        if !header.contains(c) {
            return Err(Error::Schema(format!("categorical column `{c}` not found")));
        }
    }
    let feature_pos: Vec<usize> = (0..header.len()).filter(|&j| j != target_pos).collect();
    if feature_pos.is_empty() {
        return Err(Error::Schema("no feature columns besides the target".into()));
    }

    let mut x = Vec::new();
    let mut y = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        if rec.len() != header.len() {
            return Err(Error::Data(format!(
                "row {row} has {} fields, expected {}",
                rec.len(),
                header.len()
            )));
        }
        let cell = |j: usize| -> Result<f64> {
            let raw = rec[j].trim();
            if raw.is_empty() {
                return Err(Error::Data(format!(
                    "missing value at row {row}, column `{}`",
                    header[j]
                )));
            }
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row,
                    column: header[j].clone(),
                    message: format!("`{raw}` is not a finite number"),
                })
        };
        for &j in &feature_pos {
            x.push(cell(j)?);
        }
        y.push(cell(target_pos)?);
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::Data("CSV contains no data rows".into()));
    }
    let names: Vec<String> = feature_pos.iter().map(|&j| header[j].clone()).collect();
    let kinds = names
        .iter()
        .map(|nm| {
            if schema.categorical.contains(nm) {
                ColumnKind::Categorical
            } else {
                ColumnKind::Numerical
            }
        })
        .collect();
    let x = Matrix::new(n, feature_pos.len(), x)?;
    Dataset::new(id, x, y, schema.task, names, kinds)
}

/// Fractions of rows assigned to train, validation and test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self> {
        let ok = [train, valid, test].iter().all(|f| *f > 0.0 && f.is_finite())
            && (train + valid + test - 1.0).abs() <= 1e-9;
        if !ok {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum to 1, got ({train}, {valid}, {test})"
            )));
        }
        Ok(Self { train, valid, test })
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.6,
            valid: 0.2,
            test: 0.2,
        }
    }
}

/// Seeded partition of rows into train/valid/test.
///
/// Classification splits are stratified: rows of each class are spread evenly
/// through the assignment order, so every split's class count is within one
/// row of its proportional share.
pub fn split_dataset(ds: &Dataset, fractions: SplitFractions, seed: u64) -> Result<Dataset> {
    let n = ds.n_rows();
    let n_train = (n as f64 * fractions.train).round() as usize;
    let n_valid = (n as f64 * fractions.valid).round() as usize;
    if n_train == 0 || n_valid == 0 || n_train + n_valid >= n {
        return Err(Error::Config(format!(
            "split of {n} rows with fractions ({}, {}, {}) leaves an empty split",
            fractions.train, fractions.valid, fractions.test
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = match ds.task {
        Task::Regression => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx
        }
        Task::Classification => {
            let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
            for class in [0.0, 1.0] {
                let mut members: Vec<usize> = (0..n).filter(|&i| ds.y[i] == class).collect();
                members.shuffle(&mut rng);
                let m = members.len() as f64;
                for (j, &i) in members.iter().enumerate() {
                    keyed.push(((j as f64 + 0.5) / m, class as usize, i));
                }
            }
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            keyed.into_iter().map(|k| k.2).collect()
        }
    };
    let mut out = ds.clone();
    for (pos, &i) in order.iter().enumerate() {
        out.split[i] = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        };
    }
    out.refit_cardinality();
    Ok(out)
}

/// Per-column affine standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Columns with a population std below this map to zero.
pub const MIN_STD: f64 = 1e-12;

impl Standardizer {
    pub fn fit(train: &Matrix<f64>) -> Self {
        let n = train.rows() as f64;
        let mut mean = vec![0.0; train.cols()];
        let mut std = vec![0.0; train.cols()];
        for j in 0..train.cols() {
            let col = train.column(j);
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[j] = m;
            std[j] = var.sqrt();
        }
        Self { mean, std }
    }

    pub fn apply(&self, j: usize, v: f64) -> f64 {
        if self.std[j] < MIN_STD {
            0.0
        } else {
            (v - self.mean[j]) / self.std[j]
        }
    }

    pub fn transform(&self, x: &Matrix<f64>) -> Matrix<f64> {
        let mut out = x.clone();
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                out.set(i, j, self.apply(j, x.get(i, j)));
            }
        }
        out
    }
}

/// Monotone map of regression targets.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetTransform {
    Identity,
    /// Rank-based inverse normal: distinct sorted training values, their
    /// (average) ranks and the resulting normal scores.
    Gaussian {
        knots: Vec<f64>,
        ranks: Vec<f64>,
        scores: Vec<f64>,
        n: usize,
    },
}

/// Fits the rank-based Gaussian transform `Φ⁻¹((rank - 0.5) / N)`.
pub fn fit_gaussian_target(y_train: &[f64]) -> Result<TargetTransform> {
    let n = y_train.len();
    if n < 2 {
        return Err(Error::Degenerate("gaussian target needs at least 2 values".into()));
    }
    let mut sorted = y_train.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut knots = Vec::new();
    let mut ranks = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        knots.push(sorted[i]);
        // 1-based ranks i+1..=j+1 averaged
        ranks.push((i + j) as f64 / 2.0 + 1.0);
        i = j + 1;
    }
    if knots.len() < 2 {
        return Err(Error::Degenerate("all training targets are equal".into()));
    }
    let nf = n as f64;
    let scores = ranks
        .iter()
        .map(|r| norm_ppf((r - 0.5) / nf))
        .collect::<Result<Vec<f64>>>()?;
    Ok(TargetTransform::Gaussian {
        knots,
        ranks,
        scores,
        n,
    })
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let hi = xs.partition_point(|&k| k < x);
    if xs[hi] == x {
        return ys[hi];
    }
    let lo = hi - 1;
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}

impl TargetTransform {
    pub fn is_identity(&self) -> bool {
        matches!(self, TargetTransform::Identity)
    }

    pub fn forward(&self, y: f64) -> f64 {
        match self {
            TargetTransform::Identity => y,
            TargetTransform::Gaussian {
                knots,
                ranks,
                scores,
                n,
            } => {
                let idx = knots.partition_point(|&k| k < y);
                if idx < knots.len() && knots[idx] == y {
                    return scores[idx];
                }
                let nf = *n as f64;
                let r = interp(knots, ranks, y);
                let p = ((r - 0.5) / nf).clamp(0.5 / nf, 1.0 - 0.5 / nf);
                norm_ppf(p).unwrap_or(0.0)
            }
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        match self {
            TargetTransform::Identity => z,
            TargetTransform::Gaussian { knots, scores, .. } => interp(scores, knots, z),
        }
    }
}

fn check_pair(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Contract(format!("metric inputs differ in length: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::Data("metric on empty vectors".into()));
    }
    Ok(())
}

pub fn metric_accuracy(pred: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(pred.len(), y.len())?;
    let hits = pred.iter().zip(y).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / y.len() as f64)
}

pub fn metric_r2(pred: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(pred.len(), y.len())?;
    if y.len() < 2 {
        return Err(Error::Data("r2 needs at least 2 values".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Data("r2 undefined for constant targets".into()));
    }
    let ss_res: f64 = pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn metric_mae(pred: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(pred.len(), y.len())?;
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t).abs()).sum::<f64>() / y.len() as f64)
}

/// Binary classification data whose column 0 holds integer codes `0..k` and
/// whose label is `π(code) mod 2` for a seeded permutation `π`, flipped with
/// probability `flip_prob`. Remaining columns are independent standard normal
/// noise.
pub fn gen_planted_icf(n: usize, k: usize, d_noise: usize, flip_prob: f64, seed: u64) -> Result<Dataset> {
    if k < 2 || n < 10 * k {
        return Err(Error::Config(format!(
            "planted ICF needs k >= 2 and n >= 10k, got n={n}, k={k}"
        )));
    }
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::Config(format!("flip_prob must be in [0, 1], got {flip_prob}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..k).collect();
    perm.shuffle(&mut rng);
    let d = 1 + d_noise;
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let code = rng.random_range(0..k);
        let mut label = (perm[code] % 2) as f64;
        if rng.random::<f64>() < flip_prob {
            label = 1.0 - label;
        }
        x.push(code as f64);
        for _ in 0..d_noise {
            x.push(rng.sample::<f64, _>(StandardNormal));
        }
        y.push(label);
    }
    let mut names = vec!["code".to_string()];
    names.extend((0..d_noise).map(|j| format!("noise{j}")));
    Dataset::new(
        format!("planted_icf_s{seed}"),
        Matrix::new(n, d, x)?,
        y,
        Task::Classification,
        names,
        vec![ColumnKind::Numerical; d],
    )
}

/// One-feature regression `y = sin(2π f x) + ε` with `x ~ U[0, 1]`.
pub fn gen_nonsmooth_regression(n: usize, frequency: f64, noise_std: f64, seed: u64) -> Result<Dataset> {
    if !(frequency >= 1.0) || !(noise_std >= 0.0) || n == 0 {
        return Err(Error::Config(format!(
            "non-smooth regression needs n >= 1, frequency >= 1 and noise_std >= 0, got {n}, {frequency}, {noise_std}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = rng.random();
        let eps: f64 = rng.sample::<f64, _>(StandardNormal) * noise_std;
        x.push(xi);
        y.push((2.0 * std::f64::consts::PI * frequency * xi).sin() + eps);
    }
    Dataset::new(
        format!("nonsmooth_f{frequency}_s{seed}"),
        Matrix::new(n, 1, x)?,
        y,
        Task::Regression,
        vec!["x".into()],
        vec![ColumnKind::Numerical],
    )
}
