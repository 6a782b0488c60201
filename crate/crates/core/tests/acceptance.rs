//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. Positional arguments filter criteria
//! by number or by a substring of their name.

mod support;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use icftab::cfd::{flatten, CfdEncoder};
use icftab::data::{
    gen_nonsmooth_regression, gen_planted_icf, split_dataset, ColumnKind, Dataset, Matrix, Split, SplitFractions,
    Task,
};
use icftab::icf::{run_icf, IcfConfig, IcfTest};
use icftab::nn::{
    fit, Criterion, EarlyStopping, OptimizerConfig, Snapshot, StopReason, Tensor, Trainable, MAX_EPOCHS, PATIENCE,
};
use icftab::report::{budget_curve_for_order, build_report, write_report, Entry, NormalizedScore};
use icftab::search::{
    run_samples, sample_runs, select_best, HyperSample, ModelFamily, ModelKind, Preprocessing, RunRecord, RunStatus,
    SearchSpace, RECORD_SCHEMA_VERSION,
};
use icftab::special::{chi2_sf, f_sf, norm_ppf, reg_inc_beta};
use icftab::stats::{anova_oneway, chi2_independence, mutual_info_discrete, test_tolerance, ContingencyTable};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use support::gradcheck::{run_case, CASES};
use support::quadrature::{f_sf_oracle, inc_beta_oracle, normal_ppf_oracle, upper_gamma_oracle};

type Check = fn() -> (bool, String);

struct AcceptanceCriterion {
    id: usize,
    name: &'static str,
    limit: Duration,
    run: Check,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

const CRITERIA: [AcceptanceCriterion; 10] = [
    AcceptanceCriterion { id: 1, name: "special-function accuracy", limit: secs(10), run: special_functions },
    AcceptanceCriterion { id: 2, name: "statistical-test oracles", limit: secs(5), run: statistical_tests },
    AcceptanceCriterion { id: 3, name: "ICF detection on planted data", limit: secs(30), run: planted_detection },
    AcceptanceCriterion { id: 4, name: "ICF detection regression paths", limit: secs(60), run: regression_detection },
    AcceptanceCriterion { id: 5, name: "encoding invariants", limit: secs(10), run: encoding_invariants },
    AcceptanceCriterion { id: 6, name: "gradient correctness", limit: secs(120), run: gradient_correctness },
    AcceptanceCriterion { id: 7, name: "end-to-end CFD benefit", limit: secs(900), run: cfd_benefit },
    AcceptanceCriterion { id: 8, name: "end-to-end LFF benefit", limit: secs(900), run: lff_benefit },
    AcceptanceCriterion { id: 9, name: "protocol fidelity", limit: secs(60), run: protocol_fidelity },
    AcceptanceCriterion { id: 10, name: "report math", limit: secs(10), run: report_math },
];

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |c: &AcceptanceCriterion| {
        filters.is_empty()
            || filters
                .iter()
                .any(|f| f.parse::<usize>().is_ok_and(|n| n == c.id) || c.name.contains(f.as_str()))
    };
    let mut failed = Vec::new();
    let mut ran = 0;
    for c in CRITERIA.iter().filter(|c| selected(c)) {
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run));
        let elapsed = start.elapsed();
        let (ok, detail) = outcome.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        let in_time = elapsed < c.limit;
        let pass = ok && in_time;
        println!(
            "{} criterion {:>2} {}: {}; runtime {:.1} s {} {} s",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            elapsed.as_secs_f64(),
            if in_time { "<" } else { ">=" },
            c.limit.as_secs()
        );
        if !pass {
            failed.push(c.id);
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn dataset(columns: &[Vec<f64>], y: Vec<f64>, task: Task) -> Dataset {
    let n = y.len();
    let d = columns.len();
    let mut flat = Vec::with_capacity(n * d);
    for i in 0..n {
        flat.extend(columns.iter().map(|c| c[i]));
    }
    Dataset::new(
        "synthetic",
        Matrix::new(n, d, flat).expect("matrix"),
        y,
        task,
        (0..d).map(|j| format!("c{j}")).collect(),
        vec![ColumnKind::Numerical; d],
    )
    .expect("dataset")
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn special_functions() -> (bool, String) {
    const POINTS: usize = 1000;
    const TOL: f64 = 1e-9;
    let tol = test_tolerance();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 4];
    for _ in 0..POINTS {
        let k: f64 = rng.random_range(1.0..100.0);
        let x = rng.random_range(0.0..(3.0 * k + 20.0));
        let got = chi2_sf(x, k, &tol).expect("chi2_sf");
        worst[0] = worst[0].max((got - upper_gamma_oracle(k / 2.0, x / 2.0)).abs());

        let d1: f64 = rng.random_range(1.0..50.0);
        let d2: f64 = rng.random_range(1.0..200.0);
        let x = rng.random_range(0.0..10.0);
        let got = f_sf(x, d1, d2, &tol).expect("f_sf");
        worst[1] = worst[1].max((got - f_sf_oracle(x, d1, d2)).abs());

        let a: f64 = rng.random_range(0.5..50.0);
        let b: f64 = rng.random_range(0.5..50.0);
        let x = rng.random_range(0.0..1.0);
        let got = reg_inc_beta(a, b, x, &tol).expect("reg_inc_beta");
        worst[2] = worst[2].max((got - inc_beta_oracle(a, b, x)).abs());

        let p: f64 = if rng.random_bool(0.5) {
            rng.random_range(1e-12..1.0 - 1e-12)
        } else {
            let tail = 10f64.powf(rng.random_range(-12.0..-1.0));
            if rng.random_bool(0.5) {
                tail
            } else {
                1.0 - tail
            }
        };
        let got = norm_ppf(p).expect("norm_ppf");
        worst[3] = worst[3].max((got - normal_ppf_oracle(p)).abs());
    }
    let ok = worst.iter().all(|&w| w <= TOL);
    (
        ok,
        format!(
            "max abs err chi2_sf {:.1e}, f_sf {:.1e}, reg_inc_beta {:.1e}, norm_ppf {:.1e} over {POINTS} points each (tol {TOL:.0e})",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn codes_from_table(rows: &[&[u64]]) -> (Vec<usize>, Vec<usize>) {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, row) in rows.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            for _ in 0..count {
                x.push(i);
                y.push(j);
            }
        }
    }
    (x, y)
}

fn hand_entropy(a: &[usize]) -> f64 {
    let mut counts = BTreeMap::new();
    for &v in a {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    let n = a.len() as f64;
    counts.values().map(|&c| -(c as f64 / n) * (c as f64 / n).ln()).sum()
}

fn statistical_tests() -> (bool, String) {
    let mut failures = Vec::new();
    // (table, hand-computed statistic, degrees of freedom)
    let tables: [(&[&[u64]], f64, f64); 3] = [
        (&[&[10, 0], &[0, 10]], 20.0, 1.0),
        (&[&[20, 30], &[30, 20]], 4.0, 1.0),
        (&[&[10, 20, 30], &[20, 20, 20]], 16.0 / 3.0, 2.0),
    ];
    for (rows, stat, dof) in tables {
        let (x, y) = codes_from_table(rows);
        let r = chi2_independence(&x, &y).expect("chi2");
        let flat: Vec<u64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let direct = ContingencyTable::from_counts(rows.len(), rows[0].len(), flat)
            .expect("table")
            .chi2()
            .expect("chi2");
        let p = upper_gamma_oracle(dof / 2.0, stat / 2.0);
        if (r.statistic - stat).abs() > 1e-12 || (direct.statistic - stat).abs() > 1e-12 || (r.p_value - p).abs() > 1e-9
        {
            failures.push(format!("chi2 {rows:?}: {} (p {}) vs {stat} (p {p})", r.statistic, r.p_value));
        }
    }
    let anova = anova_oneway::<f64, _>(&[vec![1.0, 2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0, 6.0]]).expect("anova");
    let p = f_sf_oracle(4.8, 1.0, 6.0);
    if (anova.statistic - 4.8).abs() > 1e-12 || (anova.p_value - p).abs() > 1e-9 {
        failures.push(format!("anova F {} p {} vs 4.8, {p}", anova.statistic, anova.p_value));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..500);
        let k = rng.random_range(1..40);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mi = mutual_info_discrete(&a, &a).expect("mi");
        worst = worst.max((mi - hand_entropy(&a)).abs());
    }
    if worst > 1e-12 {
        failures.push(format!("MI(a,a) differs from entropy by {worst:e}"));
    }
    (
        failures.is_empty(),
        if failures.is_empty() {
            format!("3 chi2 tables, ANOVA F=4.8, MI(a,a)=H(a) within {worst:.1e} on 200 vectors")
        } else {
            failures.join("; ")
        },
    )
}

fn planted_detection() -> (bool, String) {
    let cfg = IcfConfig {
        test: IcfTest::Chi2,
        chi_thresh: 1e-3,
        ..IcfConfig::default()
    };
    let (mut hits, mut false_pos) = (0, 0);
    for seed in 0..20 {
        let ds = gen_planted_icf(4000, 20, 4, 0.1, seed).expect("planted");
        let report = run_icf(&ds, &cfg).expect("icf");
        let flagged = report.flagged();
        hits += usize::from(flagged.contains(&0));
        false_pos += flagged.iter().filter(|&&j| j != 0).count();
    }
    (
        hits >= 19 && false_pos <= 2,
        format!("planted column flagged in {hits}/20 seeds (need >= 19), {false_pos} false positives over 80 noise columns (need <= 2)"),
    )
}

fn regression_detection() -> (bool, String) {
    let anova_cfg = IcfConfig {
        test: IcfTest::Anova,
        anova_thresh: 1e-3,
        ..IcfConfig::default()
    };
    let mi_cfg = IcfConfig {
        test: IcfTest::MutualInfo,
        mi_thresh: 1.25,
        ..IcfConfig::default()
    };
    let (mut anova_hits, mut perm_hits, mut linear_declined) = (0, 0, 0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);

        let n = 1000;
        let mut means: Vec<f64> = (0..10).map(|c| 3.0 * c as f64).collect();
        means.shuffle(&mut rng);
        let code: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64).collect();
        let noise: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let y: Vec<f64> = code.iter().map(|&c| means[c as usize] + normal(&mut rng)).collect();
        let report = run_icf(&dataset(&[code, noise], y, Task::Regression), &anova_cfg).expect("anova");
        anova_hits += usize::from(report.flagged().contains(&0));

        let n = 4000;
        let k = 50;
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let code: Vec<f64> = (0..n).map(|_| rng.random_range(0..k) as f64).collect();
        let noise: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let y: Vec<f64> = code
            .iter()
            .map(|&c| 4.0 * perm[c as usize] as f64 / k as f64 + 0.25 * normal(&mut rng))
            .collect();
        let report = run_icf(&dataset(&[code, noise], y, Task::Regression), &mi_cfg).expect("mi");
        perm_hits += usize::from(report.flagged().contains(&0));

        let level: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64).collect();
        let noise: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let y: Vec<f64> = level.iter().map(|&v| v + normal(&mut rng)).collect();
        let report = run_icf(&dataset(&[level, noise], y, Task::Regression), &mi_cfg).expect("mi");
        linear_declined += usize::from(!report.flagged().contains(&0));
        if let Some(r) = report.columns[0].mi_ratio {
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (
        anova_hits >= 19 && perm_hits >= 18 && linear_declined >= 18,
        format!(
            "ANOVA 3-sigma feature flagged {anova_hits}/20 (need >= 19); MI permutation-coded k=50 flagged {perm_hits}/20 (need >= 18); \
             10-level linear feature declined {linear_declined}/20 (need >= 18, ratios {lo:.3}..{hi:.3})"
        ),
    )
}

fn standardize(train: &[f64], v: f64) -> f64 {
    let n = train.len() as f64;
    let mean = train.iter().sum::<f64>() / n;
    let sd = (train.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n).sqrt();
    if sd < 1e-12 {
        0.0
    } else {
        (v - mean) / sd
    }
}

fn encoding_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(5..30);
    let d = rng.random_range(1..6);
    let append_raw = rng.random_bool(0.3);
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            let k = rng.random_range(1..8);
            (0..n).map(|_| rng.random_range(0..k) as f64 * 0.5).collect()
        })
        .collect();
    let y: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let base = dataset(&columns, y, Task::Regression);
    let mut ds = split_dataset(&base, SplitFractions::default(), seed).map_err(|e| e.to_string())?;
    // values never seen in training
    let held_out: Vec<usize> = (0..n).filter(|&i| ds.split[i] != Split::Train).collect();
    for &i in &held_out {
        if rng.random_bool(0.3) {
            let j = rng.random_range(0..d);
            ds.x.set(i, j, 100.0 + rng.random_range(0..3) as f64);
        }
    }
    let icf_set: Vec<usize> = (0..d).filter(|_| rng.random_bool(0.5)).collect();
    let enc = CfdEncoder::fit(&ds, &icf_set, append_raw).map_err(|e| e.to_string())?;
    let t = enc.encode::<f64>(&ds.x).map_err(|e| e.to_string())?;

    let train_rows = ds.indices(Split::Train);
    let train_col = |j: usize| -> Vec<f64> { train_rows.iter().map(|&i| ds.x.get(i, j)).collect() };
    let levels: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut v = train_col(j);
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    let offset = usize::from(append_raw);
    let max_bins = icf_set.iter().map(|&j| levels[j].len()).max();
    let expected_m = match max_bins {
        Some(b) => b + offset,
        None => 1,
    };
    if (t.n, t.d, t.m) != (n, d, expected_m) {
        return Err(format!("shape {:?} vs {:?}", (t.n, t.d, t.m), (n, d, expected_m)));
    }
    for i in 0..n {
        for j in 0..d {
            let slot = t.slot(i, j);
            let v = ds.x.get(i, j);
            let raw = standardize(&train_col(j), v);
            if icf_set.contains(&j) {
                if !t.categorical[j] {
                    return Err(format!("feature {j} not marked categorical"));
                }
                if append_raw && (slot[0] - raw).abs() > 1e-9 {
                    return Err(format!("raw channel of ({i},{j}) is {} not {raw}", slot[0]));
                }
                let one_hot = &slot[offset..];
                let sum: f64 = one_hot.iter().sum();
                match levels[j].iter().position(|&l| l == v) {
                    Some(code) => {
                        if sum != 1.0 || one_hot[code] != 1.0 {
                            return Err(format!("({i},{j}) one-hot {one_hot:?} for code {code}"));
                        }
                    }
                    None => {
                        if one_hot.iter().any(|&c| c != 0.0) {
                            return Err(format!("unseen value at ({i},{j}) encoded as {one_hot:?}"));
                        }
                    }
                }
                if one_hot[levels[j].len()..].iter().any(|&c| c != 0.0) {
                    return Err(format!("padding of ({i},{j}) is not zero"));
                }
            } else {
                if t.categorical[j] {
                    return Err(format!("feature {j} wrongly marked categorical"));
                }
                if (slot[0] - raw).abs() > 1e-9 || slot[1..].iter().any(|&c| c != 0.0) {
                    return Err(format!("numerical slot ({i},{j}) is {slot:?}, want [{raw}, 0, ...]"));
                }
            }
        }
    }
    let m = t.m;
    let copy = t.clone();
    let flat = flatten(t);
    if (flat.rows(), flat.cols()) != (n, d * m) {
        return Err("flattened shape".into());
    }
    for i in 0..n {
        for j in 0..d {
            for c in 0..m {
                if flat.get(i, j * m + c) != copy.slot(i, j)[c] {
                    return Err(format!("flatten layout differs at ({i},{j},{c})"));
                }
            }
        }
    }
    Ok(())
}

fn encoding_invariants() -> (bool, String) {
    const CASES_N: u64 = 1000;
    let failures: Vec<String> = (0..CASES_N)
        .filter_map(|s| encoding_case(s).err().map(|e| format!("case {s}: {e}")))
        .collect();
    (
        failures.is_empty(),
        match failures.first() {
            None => format!("{CASES_N} randomized datasets: one-hot sums, zero padding, unseen all-zero, flatten layout"),
            Some(f) => format!("{} of {CASES_N} cases failed, first {f}", failures.len()),
        },
    )
}

fn gradient_correctness() -> (bool, String) {
    const SHAPES: usize = 50;
    const MAX_REL: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = (0.0f64, CASES[0]);
    let mut bad = Vec::new();
    for case in CASES {
        let mut case_worst: f64 = 0.0;
        for _ in 0..SHAPES {
            case_worst = case_worst.max(run_case(case, &mut rng));
        }
        if case_worst > MAX_REL {
            bad.push(format!("{case:?} {case_worst:.1e}"));
        }
        if case_worst > worst.0 {
            worst = (case_worst, case);
        }
    }
    (
        bad.is_empty(),
        format!(
            "{} layers x {SHAPES} shapes, max relative error {:.1e} ({:?}), tol {MAX_REL:.0e}{}",
            CASES.len(),
            worst.0,
            worst.1,
            if bad.is_empty() { String::new() } else { format!("; failing: {}", bad.join(", ")) }
        ),
    )
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn best_test(ds: &Dataset, arm: Preprocessing, trials: usize, seed: u64) -> (f64, usize) {
    let space = SearchSpace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<HyperSample> = (0..trials)
        .map(|_| space.sample_arm(ModelFamily::Mlp, arm, ds.task, &mut rng))
        .collect();
    let records = run_samples(ds, "mlp", &samples, workers(), |_| Ok(())).expect("search");
    let completed = records.iter().filter(|r| r.status == RunStatus::Completed).count();
    let best = select_best(&records, ds.task).expect("a completed run");
    (best.test_metric.expect("completed runs have a test score"), completed)
}

fn arm_gap(make: impl Fn(u64) -> Dataset, arm: Preprocessing, need: f64, metric: &str) -> (bool, String) {
    const TRIALS: usize = 20;
    let mut parts = Vec::new();
    let mut ok = true;
    for seed in 0..3u64 {
        let ds = split_dataset(&make(seed), SplitFractions::default(), seed).expect("split");
        let (plain, pc) = best_test(&ds, Preprocessing::None, TRIALS, 10 + seed);
        let (treated, tc) = best_test(&ds, arm, TRIALS, 20 + seed);
        let gap = treated - plain;
        ok &= gap >= need;
        parts.push(format!(
            "seed {seed}: {metric} {treated:.3} vs {plain:.3} (gap {gap:+.3}, {tc}+{pc} completed)"
        ));
    }
    (
        ok,
        format!("{}; need gap >= {need} on every seed, {} workers", parts.join("; "), workers()),
    )
}

fn cfd_benefit() -> (bool, String) {
    arm_gap(
        |s| gen_planted_icf(4000, 20, 4, 0.1, s).expect("planted"),
        Preprocessing::Cfd,
        0.10,
        "accuracy",
    )
}

fn lff_benefit() -> (bool, String) {
    arm_gap(
        |s| gen_nonsmooth_regression(4000, 20.0, 0.05, s).expect("nonsmooth"),
        Preprocessing::Lff,
        0.15,
        "r2",
    )
}

struct Scripted {
    values: Vec<f64>,
    epoch: usize,
}

impl Trainable for Scripted {
    fn n_train(&self) -> usize {
        4
    }

    fn train_batch(&mut self, _rows: &[usize], _lr: f64, _rng: &mut ChaCha8Rng) -> icftab::Result<f64> {
        Ok(1.0)
    }

    fn evaluate(&mut self) -> icftab::Result<f64> {
        self.epoch += 1;
        Ok(self.values[(self.epoch - 1).min(self.values.len() - 1)])
    }

    fn snapshot(&mut self) -> Snapshot {
        Snapshot {
            tensors: vec![Tensor::zeros(vec![1])],
        }
    }

    fn restore(&mut self, _snapshot: &Snapshot) -> icftab::Result<()> {
        Ok(())
    }
}

fn scripted_fit(values: Vec<f64>, criterion: Criterion) -> (usize, usize, StopReason) {
    let mut model = Scripted { values, epoch: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let st = fit(&mut model, &OptimizerConfig::default(), EarlyStopping::new(criterion), 4, &mut rng).expect("fit");
    (st.best_epoch, st.epochs_run, st.stop_reason)
}

fn random_record(rng: &mut ChaCha8Rng, i: usize) -> RunRecord {
    let status = match rng.random_range(0..10) {
        0 => RunStatus::Failed,
        1 => RunStatus::Diverged,
        _ => RunStatus::Completed,
    };
    RunRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        dataset: "d".into(),
        model: "m".into(),
        task: Task::Classification,
        run_index: i,
        sample: None,
        arm: None,
        status,
        val_criterion: (status != RunStatus::Failed).then(|| (rng.random_range(0..20) as f64) / 20.0),
        test_metric: (status != RunStatus::Failed).then(|| rng.random()),
        wall_time_s: 0.0,
        epochs_run: 1,
        stop_reason: None,
        icf_selected: None,
        error: None,
    }
}

fn protocol_fidelity() -> (bool, String) {
    let mut failures = Vec::new();
    for &best in &[1usize, 2, 17, 120, 359] {
        for criterion in [Criterion::Accuracy, Criterion::Mae] {
            let sign = if criterion == Criterion::Accuracy { 1.0 } else { -1.0 };
            let values: Vec<f64> = (0..best).map(|e| sign * e as f64).collect();
            let got = scripted_fit(values, criterion);
            if got != (best, best + PATIENCE, StopReason::Patience) {
                failures.push(format!("plateau after {best} ({criterion:?}) gave {got:?}"));
            }
        }
    }
    let rising: Vec<f64> = (0..1000).map(|e| e as f64).collect();
    let capped = scripted_fit(rising, Criterion::Accuracy);
    if capped != (MAX_EPOCHS, MAX_EPOCHS, StopReason::MaxEpochs) || MAX_EPOCHS != 400 {
        failures.push(format!("strict improvement gave {capped:?}"));
    }

    let space = SearchSpace::default();
    let mut counts = Vec::new();
    for (model, task, seed) in [
        (ModelKind::MlpFc, Task::Classification, 0),
        (ModelKind::MlpFc, Task::Regression, 1),
        (ModelKind::ResNetFc, Task::Classification, 2),
        (ModelKind::ResNetFc, Task::Regression, 3),
    ] {
        let samples = sample_runs(&space, model, task, 150, seed);
        let f = samples.iter().filter(|s| s.preprocessing == Preprocessing::Lff).count();
        let c = samples.iter().filter(|s| s.preprocessing == Preprocessing::Cfd).count();
        if f + c != 150 || !(60..=90).contains(&f) || !(60..=90).contains(&c) {
            failures.push(format!("{} {task:?}: F {f}, C {c}", model.as_str()));
        }
        counts.push(format!("{f}/{c}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut val_sensitive = false;
    for _ in 0..500 {
        let mut records: Vec<RunRecord> = (0..20).map(|i| random_record(&mut rng, i)).collect();
        let Ok(chosen) = select_best(&records, Task::Classification).map(|r| r.run_index) else {
            continue;
        };
        for r in &mut records {
            r.test_metric = match rng.random_range(0..3) {
                0 => None,
                1 => Some(f64::NAN),
                _ => Some(rng.random_range(-5.0..5.0)),
            };
        }
        let after = select_best(&records, Task::Classification).expect("still selectable").run_index;
        if after != chosen {
            failures.push(format!("test perturbation moved selection {chosen} -> {after}"));
            break;
        }
        records[after].val_criterion = Some(-1.0);
        val_sensitive |= select_best(&records, Task::Classification).map(|r| r.run_index).ok() != Some(after);
    }
    if !val_sensitive {
        failures.push("selection never reacted to validation changes".into());
    }
    (
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "plateau stops at best+{PATIENCE}, cap at {MAX_EPOCHS}, F/C counts {} of 150, selection invariant to 500 test perturbations",
                counts.join(", ")
            )
        } else {
            failures.join("; ")
        },
    )
}

fn synthetic_records(seed: u64) -> Vec<RunRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for model in ["mlp", "mlp-fc", "resnet"] {
        for ds in ["a", "b", "c", "d"] {
            let skill: f64 = rng.random_range(0.5..1.0);
            for i in 0..rng.random_range(5..25) {
                let mut r = random_record(&mut rng, i);
                r.model = model.into();
                r.dataset = ds.into();
                r.test_metric = r.test_metric.map(|_| rng.random_range(0.4..skill));
                r.val_criterion = r.test_metric.map(|t| t + rng.random_range(-0.05..0.05));
                out.push(r);
            }
        }
    }
    out
}

fn read_dir_sorted(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("report dir")
        .map(|e| {
            let e = e.expect("entry");
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).expect("file"))
        })
        .collect();
    files.sort();
    files
}

fn report_math() -> (bool, String) {
    let mut failures = Vec::new();
    let s = NormalizedScore::new(0.75, 0.5, 1.0).expect("bounds").value;
    let r = NormalizedScore::new(0.3, 0.0, 0.6).expect("bounds").value;
    if (s - 0.5).abs() > 1e-15 || (r - 0.5).abs() > 1e-15 {
        failures.push(format!("normalization gave {s} and {r}"));
    }
    let entries = [
        Entry { val: Some(0.6), score: 0.2 },
        Entry { val: Some(0.9), score: 0.9 },
        Entry { val: Some(0.7), score: 0.4 },
    ];
    let curve = budget_curve_for_order(&entries, &[2, 0, 1], Criterion::Accuracy);
    if curve != vec![0.4, 0.4, 0.9] {
        failures.push(format!("budget curve {curve:?}"));
    }

    let records = synthetic_records(10);
    let report = build_report(&records, Task::Classification, 15, 8, 7).expect("report");
    for p in &report.profile {
        if p.fractions.windows(2).any(|w| w[1] > w[0]) {
            failures.push(format!("profile of {} increases in tau", p.model));
        }
    }
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().expect("tempdir")).collect();
    for d in &dirs {
        let again = build_report(&records, Task::Classification, 15, 8, 7).expect("report");
        write_report(&again, d.path()).expect("write");
    }
    let (a, b) = (read_dir_sorted(dirs[0].path()), read_dir_sorted(dirs[1].path()));
    if a != b || a.is_empty() {
        failures.push("report files differ between identical runs".into());
    }
    (
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "(0.75, high 1.0) -> 0.5, curve [0.4, 0.4, 0.9], {} profiles monotone over {} tau points, {} output files identical across runs",
                report.profile.len(),
                report.taus.len(),
                a.len()
            )
        } else {
            failures.join("; ")
        },
    )
}
