//! Random hyperparameter search: sampling from the model, optimizer, ICF and
//! embedding parameter spaces, running trials end to end, persisting run
//! records as JSON lines, and validation-based selection.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cfd::{CfdEncoder, EncodedTensor};
use crate::data::{metric_accuracy, metric_mae, metric_r2, Dataset, Split, Task};
use crate::error::{Error, Result};
use crate::icf::{
    run_icf, IcfConfig, IcfTest, ANOVA_THRESH_RANGE, CHI_THRESH_RANGE, MAX_CARDINALITY_CHOICES,
    MIN_CARDINALITY_CHOICES, MI_THRESH_RANGE,
};
use crate::lff::{CombinedEmbedding, LffVariant, DEFAULT_INIT_SIGMA, LFF_DIMS};
use crate::nn::{
    build_mlp, build_resnet, fit, ActivationKind, Criterion, EarlyStopping, Layer, MlpConfig, Network, NormType,
    OptimizerConfig, PoolKind, ResNetConfig, Snapshot, StopReason, SupervisedTrainer, Tensor, DEFAULT_BATCH_SIZE, T0_CHOICES,
    T_MULT_CHOICES,
};
use crate::TrainScalar;

pub const RECORD_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_RUNS: usize = 150;

/// Value distribution of one hyperparameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Dist {
    Uniform(f64, f64),
    LogUniform(f64, f64),
    UniformInt(i64, i64),
    /// `exp` of a uniform draw in log space, rounded to the nearest integer.
    LogUniformInt(i64, i64),
    Choice(Vec<f64>),
}

impl Dist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Dist::Uniform(lo, hi) => rng.random_range(*lo..=*hi),
            Dist::LogUniform(lo, hi) => rng.random_range(lo.ln()..=hi.ln()).exp(),
            Dist::UniformInt(lo, hi) => rng.random_range(*lo..=*hi) as f64,
            Dist::LogUniformInt(lo, hi) => {
                let v = rng.random_range((*lo as f64).ln()..=(*hi as f64).ln()).exp().round();
                v.clamp(*lo as f64, *hi as f64)
            }
            Dist::Choice(values) => values[rng.random_range(0..values.len())],
        }
    }
}

fn choose<T: Copy, R: Rng + ?Sized>(values: &[T], rng: &mut R) -> T {
    values[rng.random_range(0..values.len())]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Mlp,
    #[serde(rename = "resnet")]
    ResNet,
}

/// Model as named on the command line and in run records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "mlp")]
    Mlp,
    #[serde(rename = "resnet")]
    ResNet,
    #[serde(rename = "mlp-fc")]
    MlpFc,
    #[serde(rename = "resnet-fc")]
    ResNetFc,
}

impl ModelKind {
    pub fn family(self) -> ModelFamily {
        match self {
            ModelKind::Mlp | ModelKind::MlpFc => ModelFamily::Mlp,
            ModelKind::ResNet | ModelKind::ResNetFc => ModelFamily::ResNet,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::ResNet => "resnet",
            ModelKind::MlpFc => "mlp-fc",
            ModelKind::ResNetFc => "resnet-fc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(ModelKind::Mlp),
            "resnet" => Ok(ModelKind::ResNet),
            "mlp-fc" => Ok(ModelKind::MlpFc),
            "resnet-fc" => Ok(ModelKind::ResNetFc),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

/// Input pipeline of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocessing {
    /// Annotated categorical columns one-hot encoded, the rest standardized.
    None,
    /// Detected and annotated categorical columns one-hot encoded.
    Cfd,
    /// Fourier embedding of numerical columns, annotated columns one-hot.
    Lff,
    /// Detected columns one-hot, the remaining numerical ones embedded.
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Backbone {
    Mlp(MlpConfig),
    #[serde(rename = "resnet")]
    ResNet(ResNetConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LffConfig {
    pub variant: LffVariant,
    pub dim: usize,
    pub init_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSample {
    pub preprocessing: Preprocessing,
    pub backbone: Backbone,
    pub optimizer: OptimizerConfig,
    pub icf: Option<IcfConfig>,
    pub lff: Option<LffConfig>,
    pub gaussian_target: bool,
    pub seed: u64,
}

impl HyperSample {
    pub fn family(&self) -> ModelFamily {
        match self.backbone {
            Backbone::Mlp(_) => ModelFamily::Mlp,
            Backbone::ResNet(_) => ModelFamily::ResNet,
        }
    }
}

/// Parameter distributions for every searched knob.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub mlp_depth: Dist,
    pub mlp_width: Dist,
    pub mlp_dropout: Dist,
    pub num_block: Dist,
    pub num_linear: Dist,
    pub dropout_prob: Dist,
    pub downsample_gap: Dist,
    pub increasefilter_gap: Dist,
    pub kernel_fraction: Dist,
    pub lff_dim: Dist,
    pub learning_rate: Dist,
    pub eps: Dist,
    pub weight_decay: Dist,
    pub t0: Dist,
    pub t_mult: Dist,
    pub chi_thresh: Dist,
    pub anova_thresh: Dist,
    pub mi_thresh: Dist,
    pub min_cardinality: Dist,
    pub max_cardinality: Dist,
    pub lff_init_sigma: f64,
    /// Replace the F|C coin with detection followed by combined encoding.
    pub combined_mode: bool,
}

fn choices(v: &[usize]) -> Dist {
    Dist::Choice(v.iter().map(|&x| x as f64).collect())
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            mlp_depth: Dist::UniformInt(2, 8),
            mlp_width: choices(&[128, 256, 512, 1024]),
            mlp_dropout: Dist::Choice(vec![0.0, 0.5, 0.6, 0.7, 0.8, 0.9]),
            num_block: Dist::UniformInt(1, 3),
            num_linear: Dist::UniformInt(1, 3),
            dropout_prob: Dist::Choice(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]),
            downsample_gap: choices(&[0, 1, 2]),
            increasefilter_gap: choices(&[0, 1, 2]),
            kernel_fraction: Dist::Uniform(0.0, 1.0),
            lff_dim: choices(&LFF_DIMS),
            learning_rate: Dist::Uniform(0.001, 0.1),
            eps: Dist::Uniform(1e-8, 1e-4),
            weight_decay: Dist::Uniform(0.0001, 0.6),
            t0: choices(&T0_CHOICES),
            t_mult: choices(&T_MULT_CHOICES),
            chi_thresh: Dist::Uniform(CHI_THRESH_RANGE.0, CHI_THRESH_RANGE.1),
            anova_thresh: Dist::Uniform(ANOVA_THRESH_RANGE.0, ANOVA_THRESH_RANGE.1),
            mi_thresh: Dist::Uniform(MI_THRESH_RANGE.0, MI_THRESH_RANGE.1),
            min_cardinality: choices(&MIN_CARDINALITY_CHOICES),
            max_cardinality: choices(&MAX_CARDINALITY_CHOICES),
            lff_init_sigma: DEFAULT_INIT_SIGMA,
            combined_mode: false,
        }
    }
}

const ACTIVATIONS: [ActivationKind; 2] = [ActivationKind::ReLU, ActivationKind::LeakyReLU];

impl SearchSpace {
    /// Draws a full configuration for `model`. F|C models flip a fair coin
    /// between the embedding and the detection arm.
    pub fn sample<R: Rng + ?Sized>(&self, model: ModelKind, task: Task, rng: &mut R) -> HyperSample {
        let preprocessing = match model {
            ModelKind::Mlp | ModelKind::ResNet => Preprocessing::None,
            _ if self.combined_mode => Preprocessing::Combined,
            _ => {
                if rng.random_bool(0.5) {
                    Preprocessing::Lff
                } else {
                    Preprocessing::Cfd
                }
            }
        };
        self.sample_arm(model.family(), preprocessing, task, rng)
    }

    /// Draws a configuration with a fixed input pipeline.
    pub fn sample_arm<R: Rng + ?Sized>(
        &self,
        family: ModelFamily,
        preprocessing: Preprocessing,
        task: Task,
        rng: &mut R,
    ) -> HyperSample {
        let backbone = match family {
            ModelFamily::Mlp => Backbone::Mlp(self.sample_mlp(rng)),
            ModelFamily::ResNet => Backbone::ResNet(self.sample_resnet(rng)),
        };
        let optimizer = OptimizerConfig {
            learning_rate: self.learning_rate.sample(rng),
            eps: self.eps.sample(rng),
            weight_decay: self.weight_decay.sample(rng),
            t0: self.t0.sample(rng) as usize,
            t_mult: self.t_mult.sample(rng) as usize,
        };
        let icf = matches!(preprocessing, Preprocessing::Cfd | Preprocessing::Combined)
            .then(|| self.sample_icf(task, rng));
        let lff = matches!(preprocessing, Preprocessing::Lff | Preprocessing::Combined).then(|| LffConfig {
            variant: choose(&[LffVariant::Conv1x1, LffVariant::Linear], rng),
            dim: self.lff_dim.sample(rng) as usize,
            init_sigma: self.lff_init_sigma,
        });
        let gaussian_target = task == Task::Regression && rng.random_bool(0.5);
        HyperSample {
            preprocessing,
            backbone,
            optimizer,
            icf,
            lff,
            gaussian_target,
            seed: rng.next_u64(),
        }
    }

    fn sample_mlp<R: Rng + ?Sized>(&self, rng: &mut R) -> MlpConfig {
        MlpConfig {
            depth: self.mlp_depth.sample(rng) as usize,
            width: self.mlp_width.sample(rng) as usize,
            activation: choose(&ACTIVATIONS, rng),
            batch_norm: rng.random_bool(0.5),
            dropout: self.mlp_dropout.sample(rng),
        }
    }

    fn sample_resnet<R: Rng + ?Sized>(&self, rng: &mut R) -> ResNetConfig {
        ResNetConfig {
            num_block: self.num_block.sample(rng) as usize,
            num_linear: self.num_linear.sample(rng) as usize,
            use_norm: rng.random_bool(0.5),
            norm_type: choose(&[NormType::Batch, NormType::Layer], rng),
            use_dropout: rng.random_bool(0.5),
            dropout_prob: self.dropout_prob.sample(rng),
            downsample_gap: self.downsample_gap.sample(rng) as usize,
            increasefilter_gap: self.increasefilter_gap.sample(rng) as usize,
            pooling: choose(&[PoolKind::MaxPooling, PoolKind::AvgPooling], rng),
            kernel_fraction: self.kernel_fraction.sample(rng),
            activation: choose(&ACTIVATIONS, rng),
        }
    }

    fn sample_icf<R: Rng + ?Sized>(&self, task: Task, rng: &mut R) -> IcfConfig {
        let test = match task {
            Task::Classification => IcfTest::Chi2,
            Task::Regression => choose(&[IcfTest::Anova, IcfTest::MutualInfo], rng),
        };
        IcfConfig {
            test,
            chi_thresh: self.chi_thresh.sample(rng),
            anova_thresh: self.anova_thresh.sample(rng),
            mi_thresh: self.mi_thresh.sample(rng),
            min_cardinality: self.min_cardinality.sample(rng) as usize,
            max_cardinality: self.max_cardinality.sample(rng) as usize,
            auto_low_card: rng.random_bool(0.5),
            ..IcfConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged,
    Failed,
}

/// One trial outcome. Diverged runs carry the worst criterion value and the
/// random-baseline test score; failed runs carry neither.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub dataset: String,
    pub model: String,
    pub task: Task,
    pub run_index: usize,
    pub sample: Option<HyperSample>,
    pub arm: Option<Preprocessing>,
    pub status: RunStatus,
    pub val_criterion: Option<f64>,
    pub test_metric: Option<f64>,
    pub wall_time_s: f64,
    pub epochs_run: usize,
    pub stop_reason: Option<StopReason>,
    #[serde(default)]
    pub icf_selected: Option<Vec<usize>>,
    #[serde(default)]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn is_selectable(&self) -> bool {
        self.status == RunStatus::Completed && self.val_criterion.is_some_and(f64::is_finite)
    }
}

/// Test score of a model no better than chance.
pub fn baseline_score(task: Task) -> f64 {
    match task {
        Task::Classification => 0.5,
        Task::Regression => 0.0,
    }
}

/// Validation rows split in row order: the first half drives early stopping,
/// the rest is used for selection.
pub fn validation_halves(ds: &Dataset) -> Result<(Vec<usize>, Vec<usize>)> {
    let valid = ds.indices(Split::Valid);
    if valid.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 validation rows, dataset {} has {}",
            ds.id,
            valid.len()
        )));
    }
    let half = valid.len() / 2;
    Ok((valid[..half].to_vec(), valid[half..].to_vec()))
}

fn to_tensor(t: EncodedTensor<TrainScalar>) -> Result<Tensor<TrainScalar>> {
    Tensor::new(vec![t.n, t.d, t.m], t.data)
}

struct TrialOutcome {
    val_criterion: f64,
    test_metric: f64,
    epochs_run: usize,
    stop_reason: StopReason,
    icf_selected: Option<Vec<usize>>,
    snapshot: Snapshot,
}

fn execute(ds: &Dataset, sample: &HyperSample) -> Result<TrialOutcome> {
    let train_idx = ds.indices(Split::Train);
    let test_idx = ds.indices(Split::Test);
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Data(format!("dataset {} lacks train or test rows", ds.id)));
    }
    let (es_idx, sel_idx) = validation_halves(ds)?;

    let (cat_set, icf_selected) = match sample.preprocessing {
        Preprocessing::None | Preprocessing::Lff => (ds.declared_categorical(), None),
        Preprocessing::Cfd | Preprocessing::Combined => {
            let cfg = sample
                .icf
                .as_ref()
                .ok_or_else(|| Error::Config("detection arm without ICF config".into()))?;
            let report = run_icf(ds, cfg)?;
            (report.selected.clone(), Some(report.selected))
        }
    };
    let encoder = CfdEncoder::fit(ds, &cat_set, false)?;
    let encode = |idx: &[usize]| -> Result<(Tensor<TrainScalar>, Vec<f64>)> {
        let (x, y) = ds.rows_of(idx);
        Ok((to_tensor(encoder.encode::<TrainScalar>(&x)?)?, y))
    };
    let (x_train, y_train) = encode(&train_idx)?;
    let (x_es, y_es) = encode(&es_idx)?;
    let (x_sel, y_sel) = encode(&sel_idx)?;
    let (x_test, y_test) = encode(&test_idx)?;

    let mut rng = ChaCha8Rng::seed_from_u64(sample.seed);
    let d = ds.n_cols();
    let mut layers: Vec<Box<dyn Layer<TrainScalar>>> = Vec::new();
    let mut channels = encoder.depth;
    if let Preprocessing::Lff | Preprocessing::Combined = sample.preprocessing {
        let lff = sample
            .lff
            .as_ref()
            .ok_or_else(|| Error::Config("embedding arm without LFF config".into()))?;
        let flags: Vec<bool> = (0..d).map(|j| cat_set.contains(&j)).collect();
        let emb = CombinedEmbedding::new(&flags, channels, lff.variant, lff.dim, lff.init_sigma, &mut rng)?;
        channels = emb.width;
        layers.push(Box::new(emb));
    }
    let body = match &sample.backbone {
        Backbone::Mlp(cfg) => build_mlp(cfg, d * channels, &mut rng)?,
        Backbone::ResNet(cfg) => build_resnet(cfg, d, channels, &mut rng)?,
    };
    layers.extend(body.layers);
    let network = Network::new(layers);

    let mut trainer = SupervisedTrainer::new(
        network,
        ds.task,
        &sample.optimizer,
        sample.gaussian_target,
        x_train,
        &y_train,
        x_es,
        y_es,
    )?;
    let criterion = Criterion::for_task(ds.task);
    let state = fit(
        &mut trainer,
        &sample.optimizer,
        EarlyStopping::new(criterion),
        DEFAULT_BATCH_SIZE,
        &mut rng,
    )?;
    if state.stop_reason == StopReason::Divergence {
        return Ok(TrialOutcome {
            val_criterion: criterion.worst(),
            test_metric: baseline_score(ds.task),
            epochs_run: state.epochs_run,
            stop_reason: state.stop_reason,
            icf_selected,
            snapshot: state.snapshot,
        });
    }
    let sel_pred = trainer.predict(&x_sel)?;
    let test_pred = trainer.predict(&x_test)?;
    let (val_criterion, test_metric) = match ds.task {
        Task::Classification => (metric_accuracy(&sel_pred, &y_sel)?, metric_accuracy(&test_pred, &y_test)?),
        Task::Regression => (metric_mae(&sel_pred, &y_sel)?, metric_r2(&test_pred, &y_test)?),
    };
    Ok(TrialOutcome {
        val_criterion,
        test_metric,
        epochs_run: state.epochs_run,
        stop_reason: state.stop_reason,
        icf_selected,
        snapshot: state.snapshot,
    })
}

/// Runs one sampled configuration end to end. Internal errors yield a
/// `Failed` record instead of propagating.
pub fn run_trial(ds: &Dataset, model: &str, run_index: usize, sample: &HyperSample) -> RunRecord {
    run_trial_with_snapshot(ds, model, run_index, sample).0
}

/// [`run_trial`] that also returns the restored model parameters.
pub fn run_trial_with_snapshot(
    ds: &Dataset,
    model: &str,
    run_index: usize,
    sample: &HyperSample,
) -> (RunRecord, Option<Snapshot>) {
    let start = Instant::now();
    let outcome = execute(ds, sample);
    let wall_time_s = start.elapsed().as_secs_f64();
    let mut record = RunRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        dataset: ds.id.clone(),
        model: model.to_string(),
        task: ds.task,
        run_index,
        sample: Some(sample.clone()),
        arm: Some(sample.preprocessing),
        status: RunStatus::Failed,
        val_criterion: None,
        test_metric: None,
        wall_time_s,
        epochs_run: 0,
        stop_reason: None,
        icf_selected: None,
        error: None,
    };
    match outcome {
        Ok(o) => {
            record.status = if o.stop_reason == StopReason::Divergence {
                RunStatus::Diverged
            } else {
                RunStatus::Completed
            };
            record.val_criterion = Some(o.val_criterion);
            record.test_metric = Some(o.test_metric);
            record.epochs_run = o.epochs_run;
            record.stop_reason = Some(o.stop_reason);
            record.icf_selected = o.icf_selected;
            (record, Some(o.snapshot))
        }
        Err(e) => {
            log::warn!("{} run {run_index} failed: {e}", ds.id);
            record.error = Some(e.to_string());
            (record, None)
        }
    }
}

/// Best completed record by validation criterion. Ties go to the earliest.
pub fn select_best(records: &[RunRecord], task: Task) -> Result<&RunRecord> {
    let criterion = Criterion::for_task(task);
    let mut best: Option<&RunRecord> = None;
    for r in records.iter().filter(|r| r.is_selectable()) {
        let v = r.val_criterion.expect("selectable records have a criterion");
        if best.is_none_or(|b| criterion.better(v, b.val_criterion.expect("selectable"))) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| Error::Data("no completed records to select from".into()))
}

/// Samples `runs` configurations from `seed` up front.
pub fn sample_runs(space: &SearchSpace, model: ModelKind, task: Task, runs: usize, seed: u64) -> Vec<HyperSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..runs).map(|_| space.sample(model, task, &mut rng)).collect()
}

/// Runs every sample on `workers` threads. Records reach `sink` in run-index
/// order regardless of completion order.
pub fn run_samples(
    ds: &Dataset,
    model: &str,
    samples: &[HyperSample],
    workers: usize,
    mut sink: impl FnMut(&RunRecord) -> Result<()>,
) -> Result<Vec<RunRecord>> {
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<RunRecord>();
    let mut out = Vec::with_capacity(samples.len());
    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..workers.max(1).min(samples.len().max(1)) {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= samples.len() {
                    break;
                }
                let rec = run_trial(ds, model, i, &samples[i]);
                if tx.send(rec).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        for rec in rx {
            pending.insert(rec.run_index, rec);
            while let Some(rec) = pending.remove(&out.len()) {
                log::info!(
                    "{} run {}: {:?} val={:?} test={:?} epochs={}",
                    rec.dataset,
                    rec.run_index,
                    rec.status,
                    rec.val_criterion,
                    rec.test_metric,
                    rec.epochs_run
                );
                if let Err(e) = sink(&rec) {
                    next.store(samples.len(), Ordering::Relaxed);
                    return Err(e);
                }
                out.push(rec);
            }
        }
        Ok(())
    })?;
    Ok(out)
}

/// Samples and runs a full search.
pub fn run_search(
    ds: &Dataset,
    model: ModelKind,
    space: &SearchSpace,
    runs: usize,
    seed: u64,
    workers: usize,
    sink: impl FnMut(&RunRecord) -> Result<()>,
) -> Result<Vec<RunRecord>> {
    let samples = sample_runs(space, model, ds.task, runs, seed);
    run_samples(ds, model.as_str(), &samples, workers, sink)
}

pub fn write_record<W: Write>(mut w: W, record: &RunRecord) -> Result<()> {
    serde_json::to_writer(&mut w, record)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Reads JSON lines, skipping blank lines.
pub fn read_records<R: BufRead>(r: R) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("record line {}: {e}", i + 1)))?;
        if rec.schema_version != RECORD_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "record line {} has schema version {}",
                i + 1,
                rec.schema_version
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let file = std::fs::File::open(path)?;
    read_records(std::io::BufReader::new(file))
}
