//! Chi-square independence, one-way ANOVA and plug-in mutual information,
//! together with the discretizers they rely on.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{chi2_sf, f_sf, Tolerance};
use crate::Scalar;

/// Convergence settings for p-values. Large contingency tables produce
/// degrees of freedom in the thousands, so the iteration cap is generous.
pub fn test_tolerance() -> Tolerance {
    Tolerance {
        abs_tol: 1e-12,
        max_iter: 20_000,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult<T = f64> {
    pub statistic: T,
    pub p_value: T,
    /// Degrees of freedom (numerator for F).
    pub df1: usize,
    /// Denominator degrees of freedom for F, absent for chi-square.
    pub df2: Option<usize>,
}

impl<T: Scalar> TestResult<T> {
    fn degenerate() -> Self {
        Self {
            statistic: T::zero(),
            p_value: T::one(),
            df1: 0,
            df2: None,
        }
    }
}

fn cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Sorted distinct values of a column; the position of a value is its code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Categories<T = f64> {
    pub values: Vec<T>,
}

impl<T: Scalar> Categories<T> {
    pub fn fit(column: &[T]) -> Self {
        let mut values = column.to_vec();
        values.sort_by(cmp);
        values.dedup();
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Code of `v`, or `None` when `v` was not seen while fitting.
    pub fn code(&self, v: T) -> Option<usize> {
        self.values.binary_search_by(|p| cmp(p, &v)).ok()
    }
}

/// Maps each distinct value to its rank among the sorted distinct values.
pub fn categorize<T: Scalar>(column: &[T]) -> (Vec<usize>, Categories<T>) {
    let cats = Categories::fit(column);
    let codes = column
        .iter()
        .map(|&v| cats.code(v).expect("value present in its own table"))
        .collect();
    (codes, cats)
}

/// Equal-frequency bin edges fitted on a column.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileBins<T = f64> {
    /// Strictly increasing upper edges; a value's code is the number of
    /// edges strictly below it, so ties fall into the lower bin.
    pub edges: Vec<T>,
}

impl<T: Scalar> QuantileBins<T> {
    pub fn fit(column: &[T], q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::Config(format!("quantile binning needs Q >= 2, got {q}")));
        }
        let mut sorted = column.to_vec();
        sorted.sort_by(cmp);
        let n = sorted.len();
        let mut edges = Vec::with_capacity(q - 1);
        if n > 0 {
            for i in 1..q {
                let pos = (i * n).div_ceil(q).max(1) - 1;
                edges.push(sorted[pos]);
            }
        }
        edges.dedup();
        Ok(Self { edges })
    }

    pub fn code(&self, v: T) -> usize {
        self.edges.partition_point(|&e| e < v)
    }
}

pub fn quantile_bin<T: Scalar>(column: &[T], q: usize) -> Result<Vec<usize>> {
    let bins = QuantileBins::fit(column, q)?;
    Ok(column.iter().map(|&v| bins.code(v)).collect())
}

/// Observed-category cross tabulation of two code vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    /// Row-major `rows.len() × cols.len()` counts.
    pub counts: Vec<u64>,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

fn observed_labels(codes: &[usize]) -> Vec<usize> {
    let mut v = codes.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

impl ContingencyTable {
    pub fn from_codes(x: &[usize], y: &[usize]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Contract(format!(
                "contingency inputs differ in length: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        let rows = observed_labels(x);
        let cols = observed_labels(y);
        let rix: HashMap<usize, usize> = rows.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let cix: HashMap<usize, usize> = cols.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut counts = vec![0u64; rows.len() * cols.len()];
        for (a, b) in x.iter().zip(y) {
            counts[rix[a] * cols.len() + cix[b]] += 1;
        }
        Ok(Self { counts, rows, cols })
    }

    /// Builds a table directly from counts (row-major).
    pub fn from_counts(r: usize, c: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != r * c {
            return Err(Error::Contract(format!("{r}x{c} table needs {} counts", r * c)));
        }
        Ok(Self {
            counts,
            rows: (0..r).collect(),
            cols: (0..c).collect(),
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.cols.len() + j]
    }

    /// Pearson statistic over cells with positive expectation. Tables with
    /// fewer than two non-empty rows or columns give statistic 0 and p 1.
    pub fn chi2(&self) -> Result<TestResult<f64>> {
        let (r, c) = (self.rows.len(), self.cols.len());
        let row_sum: Vec<f64> = (0..r)
            .map(|i| (0..c).map(|j| self.get(i, j)).sum::<u64>() as f64)
            .collect();
        let col_sum: Vec<f64> = (0..c)
            .map(|j| (0..r).map(|i| self.get(i, j)).sum::<u64>() as f64)
            .collect();
        let live_r = row_sum.iter().filter(|&&s| s > 0.0).count();
        let live_c = col_sum.iter().filter(|&&s| s > 0.0).count();
        if live_r < 2 || live_c < 2 {
            return Ok(TestResult::degenerate());
        }
        let n = self.total() as f64;
        let mut stat = 0.0;
        for i in 0..r {
            for j in 0..c {
                let e = row_sum[i] * col_sum[j] / n;
                if e > 0.0 {
                    let d = self.get(i, j) as f64 - e;
                    stat += d * d / e;
                }
            }
        }
        let dof = (live_r - 1) * (live_c - 1);
        let p = chi2_sf(stat, dof as f64, &test_tolerance())?;
        Ok(TestResult {
            statistic: stat,
            p_value: p,
            df1: dof,
            df2: None,
        })
    }
}

/// Chi-square test of independence between two categorical code vectors.
pub fn chi2_independence(x: &[usize], y: &[usize]) -> Result<TestResult<f64>> {
    ContingencyTable::from_codes(x, y)?.chi2()
}

/// One-way ANOVA F test.
///
/// A zero within-group sum of squares gives p = 0 (infinite statistic) when
/// the group means differ and statistic 0 with p = 1 when they agree.
/// Fewer than two groups, an empty group, or no residual degrees of freedom
/// are reported as [`Error::Degenerate`].
pub fn anova_oneway<T: Scalar, G: AsRef<[T]>>(groups: &[G]) -> Result<TestResult<T>> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::Degenerate(format!("ANOVA needs at least 2 groups, got {k}")));
    }
    if groups.iter().any(|g| g.as_ref().is_empty()) {
        return Err(Error::Degenerate("ANOVA group is empty".into()));
    }
    let n: usize = groups.iter().map(|g| g.as_ref().len()).sum();
    if n <= k {
        return Err(Error::Degenerate(format!(
            "ANOVA needs more observations ({n}) than groups ({k})"
        )));
    }
    let means: Vec<T> = groups
        .iter()
        .map(|g| {
            let g = g.as_ref();
            g.iter().copied().sum::<T>() / T::lit(g.len() as f64)
        })
        .collect();
    let grand = groups
        .iter()
        .flat_map(|g| g.as_ref().iter().copied())
        .sum::<T>()
        / T::lit(n as f64);
    let mut ssb = T::zero();
    let mut ssw = T::zero();
    for (g, &m) in groups.iter().zip(&means) {
        let g = g.as_ref();
        ssb += T::lit(g.len() as f64) * (m - grand) * (m - grand);
        ssw += g.iter().map(|&v| (v - m) * (v - m)).sum::<T>();
    }
    let df1 = k - 1;
    let df2 = n - k;
    let sst = ssb + ssw;
    if ssw <= sst * T::epsilon() {
        let separated = ssb > T::zero();
        return Ok(TestResult {
            statistic: if separated { T::infinity() } else { T::zero() },
            p_value: if separated { T::zero() } else { T::one() },
            df1,
            df2: Some(df2),
        });
    }
    let f = (ssb / T::lit(df1 as f64)) / (ssw / T::lit(df2 as f64));
    let p = f_sf(f, T::lit(df1 as f64), T::lit(df2 as f64), &test_tolerance())?;
    Ok(TestResult {
        statistic: f,
        p_value: p,
        df1,
        df2: Some(df2),
    })
}

fn joint_counts(a: &[usize], b: &[usize]) -> (HashMap<(usize, usize), u64>, HashMap<usize, u64>, HashMap<usize, u64>) {
    let mut ab = HashMap::new();
    let mut ca = HashMap::new();
    let mut cb = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *ab.entry((x, y)).or_insert(0) += 1;
        *ca.entry(x).or_insert(0) += 1;
        *cb.entry(y).or_insert(0) += 1;
    }
    (ab, ca, cb)
}

/// Plug-in mutual information in nats over observed cells.
pub fn mutual_info_discrete(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "mutual information inputs differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let n = a.len() as f64;
    let (ab, ca, cb) = joint_counts(a, b);
    let mut cells: Vec<((usize, usize), u64)> = ab.into_iter().collect();
    cells.sort_unstable();
    let mut mi = 0.0;
    for ((x, y), c) in cells {
        let c = c as f64;
        mi += c / n * (c * n / (ca[&x] as f64 * cb[&y] as f64)).ln();
    }
    Ok(mi.max(0.0))
}

/// Empirical entropy in nats.
pub fn entropy(a: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut counts = HashMap::new();
    for &x in a {
        *counts.entry(x).or_insert(0u64) += 1;
    }
    let mut c: Vec<u64> = counts.into_values().collect();
    c.sort_unstable();
    -c.iter().map(|&k| k as f64 / n * (k as f64 / n).ln()).sum::<f64>()
}

/// Mean of `mutual_info_discrete(target, c)` over the context vectors.
pub fn avg_mutual_info<C: AsRef<[usize]>>(target: &[usize], context: &[C]) -> Result<f64> {
    if context.is_empty() {
        return Err(Error::Contract("mutual information context is empty".into()));
    }
    let mut total = 0.0;
    for c in context {
        total += mutual_info_discrete(target, c.as_ref())?;
    }
    Ok(total / context.len() as f64)
}

#[cfg(test)]
#[path = "../tests/support/quadrature.rs"]
mod quadrature;
