//! Aggregation of run records: normalized scores, performance by search
//! budget, performance profiles over the top runs, and heatmap exports.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::nn::Criterion;
use crate::search::{baseline_score, RunRecord};

pub const DEFAULT_SIMS: usize = 15;
pub const DEFAULT_TOP_K: usize = 8;
/// Datasets whose best normalized score does not exceed this are dropped.
pub const EXCLUSION_THRESHOLD: f64 = 0.1;
pub const TAU_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScore {
    pub raw: f64,
    pub low: f64,
    pub high: f64,
    pub value: f64,
}

impl NormalizedScore {
    /// `(raw - low) / (high - low)` clamped to `[0, 1]`.
    pub fn new(raw: f64, low: f64, high: f64) -> Result<Self> {
        if !(high > low) {
            return Err(Error::Degenerate(format!("normalization bounds low {low} ≥ high {high}")));
        }
        Ok(Self {
            raw,
            low,
            high,
            value: ((raw - low) / (high - low)).clamp(0.0, 1.0),
        })
    }
}

/// Per-record normalized test scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    /// `None` for records without a test score or on an excluded dataset.
    pub scores: Vec<Option<f64>>,
    pub highs: BTreeMap<String, f64>,
    /// Datasets where no record beats the random baseline.
    pub unbounded: BTreeSet<String>,
}

/// Normalizes every record against the random baseline of `task` and the
/// best test score any model reached on the same dataset.
pub fn normalize(records: &[RunRecord], task: Task) -> Normalized {
    let low = baseline_score(task);
    let mut highs: BTreeMap<String, f64> = BTreeMap::new();
    for r in records {
        if let Some(t) = r.test_metric.filter(|v| v.is_finite()) {
            highs
                .entry(r.dataset.clone())
                .and_modify(|h| *h = h.max(t))
                .or_insert(t);
        }
    }
    let unbounded: BTreeSet<String> = highs
        .iter()
        .filter(|(_, &h)| !(h > low))
        .map(|(d, _)| d.clone())
        .collect();
    let scores = records
        .iter()
        .map(|r| {
            let high = *highs.get(&r.dataset)?;
            let raw = r.test_metric.filter(|v| v.is_finite())?;
            NormalizedScore::new(raw, low, high).ok().map(|s| s.value)
        })
        .collect();
    Normalized {
        scores,
        highs,
        unbounded,
    }
}

/// Datasets whose best normalized score exceeds the exclusion threshold.
pub fn exclude_degenerate(datasets: &BTreeSet<String>, records: &[RunRecord], scores: &[Option<f64>]) -> BTreeSet<String> {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for (r, s) in records.iter().zip(scores) {
        if let Some(v) = s {
            let e = best.entry(r.dataset.as_str()).or_insert(f64::NEG_INFINITY);
            *e = e.max(*v);
        }
    }
    datasets
        .iter()
        .filter(|d| best.get(d.as_str()).is_some_and(|&b| b > EXCLUSION_THRESHOLD))
        .cloned()
        .collect()
}

/// Validation criterion and normalized test score of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    /// `None` when the run cannot be selected.
    pub val: Option<f64>,
    pub score: f64,
}

/// Best-so-far normalized score after each run of `order`, selecting by
/// validation criterion. Before any selectable run the score is 0.
pub fn budget_curve_for_order(entries: &[Entry], order: &[usize], criterion: Criterion) -> Vec<f64> {
    let mut best: Option<Entry> = None;
    order
        .iter()
        .map(|&i| {
            let e = entries[i];
            if let Some(v) = e.val {
                if best.is_none_or(|b| criterion.better(v, b.val.expect("selected entries are selectable"))) {
                    best = Some(e);
                }
            }
            best.map_or(0.0, |b| b.score)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetCurve {
    pub model: String,
    /// Mean normalized score at budgets `1..=values.len()`.
    pub values: Vec<f64>,
}

/// Record entries grouped by model, then dataset, restricted to `datasets`.
pub fn group_entries(
    records: &[RunRecord],
    scores: &[Option<f64>],
    datasets: &BTreeSet<String>,
) -> BTreeMap<String, BTreeMap<String, Vec<Entry>>> {
    let mut groups: BTreeMap<String, BTreeMap<String, Vec<Entry>>> = BTreeMap::new();
    for (r, s) in records.iter().zip(scores) {
        if !datasets.contains(&r.dataset) {
            continue;
        }
        let val = if r.is_selectable() { r.val_criterion } else { None };
        groups
            .entry(r.model.clone())
            .or_default()
            .entry(r.dataset.clone())
            .or_default()
            .push(Entry {
                val,
                score: s.unwrap_or(0.0),
            });
    }
    groups
}

/// Simulated searches: each simulation permutes a model's runs on a dataset
/// and tracks the validation-selected score by budget. Curves are averaged
/// over simulations, then over datasets. Datasets with fewer runs than the
/// longest hold their final value.
pub fn budget_curves(
    groups: &BTreeMap<String, BTreeMap<String, Vec<Entry>>>,
    criterion: Criterion,
    sims: usize,
    seed: u64,
) -> Vec<BudgetCurve> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sims = sims.max(1);
    groups
        .iter()
        .map(|(model, by_ds)| {
            let len = by_ds.values().map(Vec::len).max().unwrap_or(0);
            let mut total = vec![0.0; len];
            for entries in by_ds.values() {
                let mut mean = vec![0.0; entries.len()];
                let mut order: Vec<usize> = (0..entries.len()).collect();
                for _ in 0..sims {
                    order.shuffle(&mut rng);
                    for (m, v) in mean.iter_mut().zip(budget_curve_for_order(entries, &order, criterion)) {
                        *m += v / sims as f64;
                    }
                }
                let last = mean.last().copied().unwrap_or(0.0);
                for (b, t) in total.iter_mut().enumerate() {
                    *t += mean.get(b).copied().unwrap_or(last);
                }
            }
            let n = by_ds.len().max(1) as f64;
            BudgetCurve {
                model: model.clone(),
                values: total.into_iter().map(|t| t / n).collect(),
            }
        })
        .collect()
}

/// Indices of the `k` best selectable entries by validation criterion, best
/// first, ties by position.
pub fn top_k(entries: &[Entry], k: usize, criterion: Criterion) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].val.is_some()).collect();
    idx.sort_by(|&a, &b| {
        let (va, vb) = (entries[a].val.expect("selectable"), entries[b].val.expect("selectable"));
        if criterion.better(va, vb) {
            std::cmp::Ordering::Less
        } else if criterion.better(vb, va) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    idx.truncate(k);
    idx
}

pub fn tau_grid() -> Vec<f64> {
    (0..TAU_POINTS).map(|i| i as f64 / (TAU_POINTS - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSeries {
    pub model: String,
    /// Fraction of (dataset, top run) pairs with a score strictly above each τ.
    pub fractions: Vec<f64>,
    /// Datasets with fewer than `k` selectable runs.
    pub short: Vec<String>,
}

pub fn performance_profile(
    groups: &BTreeMap<String, BTreeMap<String, Vec<Entry>>>,
    criterion: Criterion,
    k: usize,
    taus: &[f64],
) -> Vec<ProfileSeries> {
    groups
        .iter()
        .map(|(model, by_ds)| {
            let mut pool = Vec::new();
            let mut short = Vec::new();
            for (ds, entries) in by_ds {
                let top = top_k(entries, k, criterion);
                if top.len() < k {
                    short.push(ds.clone());
                }
                pool.extend(top.into_iter().map(|i| entries[i].score));
            }
            let fractions = taus
                .iter()
                .map(|&t| {
                    if pool.is_empty() {
                        0.0
                    } else {
                        pool.iter().filter(|&&s| s > t).count() as f64 / pool.len() as f64
                    }
                })
                .collect();
            ProfileSeries {
                model: model.clone(),
                fractions,
                short,
            }
        })
        .collect()
}

/// Rank-ordered top-`k` scores per model for one dataset, concatenated in
/// model order. Missing ranks are `None`.
pub fn heatmap_row(
    groups: &BTreeMap<String, BTreeMap<String, Vec<Entry>>>,
    models: &[String],
    dataset: &str,
    k: usize,
    criterion: Criterion,
) -> Vec<Option<f64>> {
    let mut row = Vec::with_capacity(models.len() * k);
    for m in models {
        let entries = groups.get(m).and_then(|g| g.get(dataset));
        let top = entries.map(|e| top_k(e, k, criterion)).unwrap_or_default();
        for r in 0..k {
            row.push(top.get(r).map(|&i| entries.expect("ranked entries exist")[i].score));
        }
    }
    row
}

pub fn heatmap_header(models: &[String], k: usize) -> Vec<String> {
    let mut h = vec!["dataset".to_string()];
    for m in models {
        h.extend((1..=k).map(|r| format!("{m}_top{r}")));
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub model: String,
    pub dataset: String,
    pub run_index: usize,
    pub val_criterion: f64,
    pub test_metric: Option<f64>,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub task: Task,
    pub models: Vec<String>,
    pub retained: Vec<String>,
    pub excluded: Vec<String>,
    pub highs: BTreeMap<String, f64>,
    pub selections: Vec<Selection>,
    pub profile_short: BTreeMap<String, Vec<String>>,
    pub sims: usize,
    pub top_k: usize,
    pub seed: u64,
    pub records: usize,
    pub ignored_records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summary: ReportSummary,
    pub budget: Vec<BudgetCurve>,
    pub profile: Vec<ProfileSeries>,
    pub taus: Vec<f64>,
    /// `(dataset, row)` pairs in dataset order.
    pub heatmap: Vec<(String, Vec<Option<f64>>)>,
}

/// Builds every report table from records of one task. Records of the other
/// task are ignored.
pub fn build_report(all: &[RunRecord], task: Task, sims: usize, k: usize, seed: u64) -> Result<Report> {
    if k == 0 {
        return Err(Error::Config("top-k must be at least 1".into()));
    }
    let records: Vec<RunRecord> = all.iter().filter(|r| r.task == task).cloned().collect();
    let ignored = all.len() - records.len();
    let criterion = Criterion::for_task(task);
    let norm = normalize(&records, task);
    let datasets: BTreeSet<String> = records.iter().map(|r| r.dataset.clone()).collect();
    let retained = exclude_degenerate(&datasets, &records, &norm.scores);
    let excluded: Vec<String> = datasets.difference(&retained).cloned().collect();
    let groups = group_entries(&records, &norm.scores, &retained);
    let models: Vec<String> = groups.keys().cloned().collect();

    let mut selections = Vec::new();
    for (model, by_ds) in &groups {
        for (ds, entries) in by_ds {
            let Some(&i) = top_k(entries, 1, criterion).first() else {
                continue;
            };
            let rec = records
                .iter()
                .filter(|r| &r.model == model && &r.dataset == ds)
                .nth(i)
                .expect("entry index maps to a record");
            selections.push(Selection {
                model: model.clone(),
                dataset: ds.clone(),
                run_index: rec.run_index,
                val_criterion: entries[i].val.expect("selectable"),
                test_metric: rec.test_metric,
                normalized: entries[i].score,
            });
        }
    }

    let taus = tau_grid();
    let budget = budget_curves(&groups, criterion, sims, seed);
    let profile = performance_profile(&groups, criterion, k, &taus);
    let heatmap = retained
        .iter()
        .map(|d| (d.clone(), heatmap_row(&groups, &models, d, k, criterion)))
        .collect();
    let profile_short = profile
        .iter()
        .filter(|p| !p.short.is_empty())
        .map(|p| (p.model.clone(), p.short.clone()))
        .collect();
    Ok(Report {
        summary: ReportSummary {
            task,
            models,
            retained: retained.into_iter().collect(),
            excluded,
            highs: norm.highs,
            selections,
            profile_short,
            sims,
            top_k: k,
            seed,
            records: records.len(),
            ignored_records: ignored,
        },
        budget,
        profile,
        taus,
        heatmap,
    })
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

/// Writes `budget.csv`, `profile.csv`, `heatmap.csv`, one
/// `heatmap_<dataset>.csv` per retained dataset, and `summary.json`.
pub fn write_report(report: &Report, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let models = &report.summary.models;

    let mut w = csv::Writer::from_path(dir.join("budget.csv"))?;
    let mut header = vec!["budget".to_string()];
    header.extend(report.budget.iter().map(|c| c.model.clone()));
    w.write_record(&header)?;
    let len = report.budget.iter().map(|c| c.values.len()).max().unwrap_or(0);
    for b in 0..len {
        let mut row = vec![(b + 1).to_string()];
        row.extend(report.budget.iter().map(|c| fmt(c.values.get(b).copied())));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("profile.csv"))?;
    let mut header = vec!["tau".to_string()];
    header.extend(report.profile.iter().map(|p| p.model.clone()));
    w.write_record(&header)?;
    for (i, tau) in report.taus.iter().enumerate() {
        let mut row = vec![tau.to_string()];
        row.extend(report.profile.iter().map(|p| p.fractions[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let header = heatmap_header(models, report.summary.top_k);
    let mut all = csv::Writer::from_path(dir.join("heatmap.csv"))?;
    all.write_record(&header)?;
    for (ds, cells) in &report.heatmap {
        let mut row = vec![ds.clone()];
        row.extend(cells.iter().map(|&c| fmt(c)));
        all.write_record(&row)?;
        let mut one = csv::Writer::from_path(dir.join(format!("heatmap_{}.csv", file_safe(ds))))?;
        one.write_record(&header)?;
        one.write_record(&row)?;
        one.flush()?;
    }
    all.flush()?;

    let mut f = std::fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &report.summary)?;
    f.write_all(b"\n")?;
    Ok(())
}
