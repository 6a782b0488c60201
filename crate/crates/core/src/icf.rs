//! Detection of implicitly categorical features: numerically stored columns
//! whose relation to the target survives, or strengthens, once their numeric
//! ordering is discarded.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::stats::{anova_oneway, avg_mutual_info, categorize, chi2_independence, quantile_bin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcfTest {
    Chi2,
    Anova,
    MutualInfo,
}

pub const MIN_CARDINALITY_CHOICES: [usize; 3] = [0, 10, 100];
pub const MAX_CARDINALITY_CHOICES: [usize; 5] = [300, 500, 1000, 1500, 5000];
pub const CHI_THRESH_RANGE: (f64, f64) = (1e-50, 1e-3);
pub const ANOVA_THRESH_RANGE: (f64, f64) = (1e-30, 1e-3);
pub const MI_THRESH_RANGE: (f64, f64) = (0.75, 1.5);
/// Ratio values at or below this are treated as zero.
const MI_ZERO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcfConfig {
    pub test: IcfTest,
    pub chi_thresh: f64,
    pub anova_thresh: f64,
    pub mi_thresh: f64,
    pub min_cardinality: usize,
    pub max_cardinality: usize,
    pub auto_low_card: bool,
    /// Equal-frequency bins used to discretize continuous variables for MI.
    #[serde(default = "default_mi_bins")]
    pub mi_bins: usize,
}

fn default_mi_bins() -> usize {
    16
}

impl Default for IcfConfig {
    fn default() -> Self {
        Self {
            test: IcfTest::Chi2,
            chi_thresh: 1e-3,
            anova_thresh: 1e-3,
            mi_thresh: 1.25,
            min_cardinality: 0,
            max_cardinality: 5000,
            auto_low_card: false,
            mi_bins: default_mi_bins(),
        }
    }
}

fn in_range(v: f64, (lo, hi): (f64, f64)) -> bool {
    v >= lo && v <= hi
}

impl IcfConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("ICF config: {what}")));
        if !in_range(self.chi_thresh, CHI_THRESH_RANGE) {
            return bad(&format!("chi_thresh {} outside [1e-50, 1e-3]", self.chi_thresh));
        }
        if !in_range(self.anova_thresh, ANOVA_THRESH_RANGE) {
            return bad(&format!("anova_thresh {} outside [1e-30, 1e-3]", self.anova_thresh));
        }
        if !in_range(self.mi_thresh, MI_THRESH_RANGE) {
            return bad(&format!("mi_thresh {} outside [0.75, 1.5]", self.mi_thresh));
        }
        if !MIN_CARDINALITY_CHOICES.contains(&self.min_cardinality) {
            return bad(&format!("min_cardinality {} not in {{0, 10, 100}}", self.min_cardinality));
        }
        if !MAX_CARDINALITY_CHOICES.contains(&self.max_cardinality) {
            return bad(&format!(
                "max_cardinality {} not in {{300, 500, 1000, 1500, 5000}}",
                self.max_cardinality
            ));
        }
        if self.mi_bins < 2 {
            return bad("mi_bins must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    SkippedHighCard,
    AutoCategorical,
    Tested,
}

/// Skip dominates auto-flagging, which dominates testing.
pub fn cardinality_gate(cardinality: usize, cfg: &IcfConfig) -> Gate {
    if cardinality > cfg.max_cardinality {
        Gate::SkippedHighCard
    } else if cfg.auto_low_card && cardinality <= cfg.min_cardinality {
        Gate::AutoCategorical
    } else {
        Gate::Tested
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnReport {
    pub index: usize,
    pub name: String,
    pub cardinality: usize,
    pub gate: Gate,
    #[serde(with = "float_repr")]
    pub statistic: Option<f64>,
    #[serde(with = "float_repr")]
    pub p_value: Option<f64>,
    #[serde(with = "float_repr")]
    pub mi_ratio: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcfReport {
    pub test: IcfTest,
    pub columns: Vec<ColumnReport>,
    /// Columns annotated as categorical in the dataset schema.
    pub explicit: Vec<usize>,
    /// Final set of columns to encode categorically, ascending.
    pub selected: Vec<usize>,
}

impl IcfReport {
    pub fn flagged(&self) -> Vec<usize> {
        self.columns.iter().filter(|c| c.flagged).map(|c| c.index).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("invalid ICF report: {e}")))
    }
}

/// Serializes optional reals, writing infinities as the strings `"inf"` and
/// `"-inf"` since JSON has no literal for them.
mod float_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_finite() => s.serialize_f64(*x),
            Some(x) if x.is_nan() => s.serialize_none(),
            Some(x) if *x > 0.0 => s.serialize_str("inf"),
            Some(_) => s.serialize_str("-inf"),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) => match t.as_str() {
                "inf" => Ok(Some(f64::INFINITY)),
                "-inf" => Ok(Some(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("unexpected number `{other}`"))),
            },
        }
    }
}

struct TrainView {
    columns: Vec<Vec<f64>>,
    y: Vec<f64>,
}

fn train_view(ds: &Dataset) -> TrainView {
    let (x, y) = ds.train_rows();
    TrainView {
        columns: (0..x.cols()).map(|j| x.column(j)).collect(),
        y,
    }
}

fn blank(ds: &Dataset, j: usize, cfg: &IcfConfig) -> ColumnReport {
    let meta = &ds.columns[j];
    let gate = cardinality_gate(meta.cardinality, cfg);
    ColumnReport {
        index: j,
        name: meta.name.clone(),
        cardinality: meta.cardinality,
        gate,
        statistic: None,
        p_value: None,
        mi_ratio: None,
        flagged: gate == Gate::AutoCategorical,
    }
}

fn require_task(ds: &Dataset, task: Task, test: IcfTest) -> Result<()> {
    if ds.task != task {
        return Err(Error::Config(format!(
            "{test:?} test does not apply to a {:?} dataset",
            ds.task
        )));
    }
    Ok(())
}

/// Chi-square test of each gated column against the binary target.
pub fn detect_classification(ds: &Dataset, cfg: &IcfConfig) -> Result<IcfReport> {
    require_task(ds, Task::Classification, IcfTest::Chi2)?;
    let view = train_view(ds);
    let y: Vec<usize> = view.y.iter().map(|&v| v as usize).collect();
    let mut cols = Vec::with_capacity(ds.n_cols());
    for j in 0..ds.n_cols() {
        let mut rep = blank(ds, j, cfg);
        if rep.gate == Gate::Tested {
            let (codes, _) = categorize(&view.columns[j]);
            let r = chi2_independence(&codes, &y)?;
            rep.statistic = Some(r.statistic);
            rep.p_value = Some(r.p_value);
            rep.flagged = r.p_value < cfg.chi_thresh;
        }
        cols.push(rep);
    }
    Ok(finish(ds, IcfTest::Chi2, cols))
}

/// One-way ANOVA of the target grouped by each gated column's values.
pub fn detect_regression_anova(ds: &Dataset, cfg: &IcfConfig) -> Result<IcfReport> {
    require_task(ds, Task::Regression, IcfTest::Anova)?;
    let view = train_view(ds);
    let mut cols = Vec::with_capacity(ds.n_cols());
    for j in 0..ds.n_cols() {
        let mut rep = blank(ds, j, cfg);
        if rep.gate == Gate::Tested {
            let (codes, cats) = categorize(&view.columns[j]);
            let mut groups = vec![Vec::new(); cats.len()];
            for (&c, &v) in codes.iter().zip(&view.y) {
                groups[c].push(v);
            }
            match anova_oneway(&groups) {
                Ok(r) => {
                    rep.statistic = Some(r.statistic);
                    rep.p_value = Some(r.p_value);
                    rep.flagged = r.p_value < cfg.anova_thresh;
                }
                Err(Error::Degenerate(msg)) => log::debug!("column {j}: {msg}"),
                Err(e) => return Err(e),
            }
        }
        cols.push(rep);
    }
    Ok(finish(ds, IcfTest::Anova, cols))
}

/// Ratio of the mean mutual information between a categorized column and
/// its context (every other column and the target, each quantile-binned) to
/// the same quantity with the column itself quantile-binned.
pub fn detect_regression_mi(ds: &Dataset, cfg: &IcfConfig) -> Result<IcfReport> {
    require_task(ds, Task::Regression, IcfTest::MutualInfo)?;
    let view = train_view(ds);
    let binned: Vec<Vec<usize>> = view
        .columns
        .iter()
        .map(|c| quantile_bin(c, cfg.mi_bins))
        .collect::<Result<_>>()?;
    let y_binned = quantile_bin(&view.y, cfg.mi_bins)?;
    let mut cols = Vec::with_capacity(ds.n_cols());
    for j in 0..ds.n_cols() {
        let mut rep = blank(ds, j, cfg);
        if rep.gate == Gate::Tested {
            let mut context: Vec<&[usize]> = binned
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .map(|(_, b)| b.as_slice())
                .collect();
            context.push(&y_binned);
            let (codes, _) = categorize(&view.columns[j]);
            let num = avg_mutual_info(&codes, &context)?;
            let den = avg_mutual_info(&binned[j], &context)?;
            let ratio = mi_ratio(num, den);
            rep.statistic = Some(num);
            rep.mi_ratio = ratio;
            rep.flagged = ratio.is_some_and(|r| r > cfg.mi_thresh);
        }
        cols.push(rep);
    }
    Ok(finish(ds, IcfTest::MutualInfo, cols))
}

/// `None` when both terms vanish; `+∞` when only the denominator does.
pub fn mi_ratio(num: f64, den: f64) -> Option<f64> {
    if den <= MI_ZERO {
        (num > MI_ZERO).then_some(f64::INFINITY)
    } else {
        Some(num / den)
    }
}

fn finish(ds: &Dataset, test: IcfTest, columns: Vec<ColumnReport>) -> IcfReport {
    let explicit = ds.declared_categorical();
    let mut selected: Vec<usize> = columns
        .iter()
        .filter(|c| c.flagged)
        .map(|c| c.index)
        .chain(explicit.iter().copied())
        .collect();
    selected.sort_unstable();
    selected.dedup();
    IcfReport {
        test,
        columns,
        explicit,
        selected,
    }
}

/// Runs the detector matching `cfg.test` on the training rows of `ds`.
pub fn run_icf(ds: &Dataset, cfg: &IcfConfig) -> Result<IcfReport> {
    cfg.validate()?;
    match (ds.task, cfg.test) {
        (Task::Classification, IcfTest::Chi2) => detect_classification(ds, cfg),
        (Task::Regression, IcfTest::Anova) => detect_regression_anova(ds, cfg),
        (Task::Regression, IcfTest::MutualInfo) => detect_regression_mi(ds, cfg),
        (task, test) => Err(Error::Config(format!(
            "{test:?} test does not apply to a {task:?} dataset"
        ))),
    }
}
