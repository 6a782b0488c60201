use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, Loss};
use super::models::Network;
use super::optim::{cosine_warm_restart_lr, zero_grads, AdamW, OptimizerConfig};
use super::snapshot::Snapshot;
use super::{Ctx, Layer, Tensor};
use crate::data::{fit_gaussian_target, metric_accuracy, metric_mae, TargetTransform, Task, MIN_STD};
use crate::error::{Error, Result};
use crate::Scalar;

pub const DEFAULT_BATCH_SIZE: usize = 256;
pub const MAX_EPOCHS: usize = 400;
pub const PATIENCE: usize = 40;

/// Validation criterion: accuracy is maximized, MAE minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Accuracy,
    Mae,
}

impl Criterion {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Classification => Criterion::Accuracy,
            Task::Regression => Criterion::Mae,
        }
    }

    /// Strict improvement of `candidate` over `incumbent`.
    pub fn better(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Criterion::Accuracy => candidate > incumbent,
            Criterion::Mae => candidate < incumbent,
        }
    }

    /// Value recorded for a diverged run.
    pub fn worst(self) -> f64 {
        match self {
            Criterion::Accuracy => 0.0,
            Criterion::Mae => f64::MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
    Divergence,
}

/// Patience bookkeeping over 1-based epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub criterion: Criterion,
    pub patience: usize,
    pub max_epochs: usize,
    pub best: Option<(usize, f64)>,
}

impl EarlyStopping {
    pub fn new(criterion: Criterion) -> Self {
        Self::with_limits(criterion, PATIENCE, MAX_EPOCHS)
    }

    pub fn with_limits(criterion: Criterion, patience: usize, max_epochs: usize) -> Self {
        Self {
            criterion,
            patience,
            max_epochs,
            best: None,
        }
    }

    /// Records the criterion of `epoch` and reports whether it improved.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        let improved = match self.best {
            None => true,
            Some((_, best)) => self.criterion.better(value, best),
        };
        if improved {
            self.best = Some((epoch, value));
        }
        improved
    }

    /// Stop decision after `epoch` has been observed.
    pub fn should_stop(&self, epoch: usize) -> Option<StopReason> {
        let best_epoch = self.best.map_or(0, |(e, _)| e);
        if epoch - best_epoch >= self.patience {
            Some(StopReason::Patience)
        } else if epoch >= self.max_epochs {
            Some(StopReason::MaxEpochs)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub criterion: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub best_criterion: f64,
    /// 0 when no epoch produced a finite criterion.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stop_reason: StopReason,
    pub snapshot: Snapshot,
    pub history: Vec<EpochReport>,
}

/// A model that the early-stopping loop can drive.
pub trait Trainable {
    fn n_train(&self) -> usize;

    /// One optimizer step on the given training rows. Returns the batch loss.
    fn train_batch(&mut self, rows: &[usize], lr: f64, rng: &mut ChaCha8Rng) -> Result<f64>;

    /// Criterion on the early-stopping rows in evaluation mode.
    fn evaluate(&mut self) -> Result<f64>;

    fn snapshot(&mut self) -> Snapshot;

    fn restore(&mut self, snapshot: &Snapshot) -> Result<()>;
}

/// Shuffled minibatches. A trailing batch of a single row is merged into the
/// previous one so batch statistics stay defined.
pub fn minibatches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        let tail = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(tail);
    }
    out
}

/// Runs epochs until patience or the epoch cap is hit, then restores the best
/// snapshot. A non-finite loss or criterion stops with `Divergence` and the
/// worst criterion value.
pub fn fit<M: Trainable + ?Sized>(
    model: &mut M,
    schedule: &OptimizerConfig,
    mut stopping: EarlyStopping,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrainState> {
    schedule.validate()?;
    if model.n_train() == 0 {
        return Err(Error::Data("no training rows".into()));
    }
    let criterion = stopping.criterion;
    let mut history = Vec::new();
    let mut snapshot = model.snapshot();
    let mut epoch = 0;
    let reason = loop {
        epoch += 1;
        let lr = cosine_warm_restart_lr(epoch - 1, schedule.t0, schedule.t_mult, schedule.learning_rate);
        let mut total = 0.0;
        let mut seen = 0usize;
        let mut finite = true;
        for batch in minibatches(model.n_train(), batch_size, rng) {
            let loss = model.train_batch(&batch, lr, rng)?;
            if !loss.is_finite() {
                finite = false;
                total = loss;
                break;
            }
            total += loss * batch.len() as f64;
            seen += batch.len();
        }
        let value = if finite { model.evaluate()? } else { f64::NAN };
        if !finite || !value.is_finite() {
            history.push(EpochReport {
                epoch,
                learning_rate: lr,
                train_loss: total,
                criterion: value,
                improved: false,
            });
            break StopReason::Divergence;
        }
        let improved = stopping.observe(epoch, value);
        if improved {
            snapshot = model.snapshot();
        }
        history.push(EpochReport {
            epoch,
            learning_rate: lr,
            train_loss: total / seen as f64,
            criterion: value,
            improved,
        });
        if let Some(r) = stopping.should_stop(epoch) {
            break r;
        }
    };
    model.restore(&snapshot)?;
    let (best_epoch, best_criterion) = match (reason, stopping.best) {
        (StopReason::Divergence, Some((e, _))) => (e, criterion.worst()),
        (_, Some(b)) => b,
        (_, None) => (0, criterion.worst()),
    };
    Ok(TrainState {
        best_criterion,
        best_epoch,
        epochs_run: epoch,
        stop_reason: reason,
        snapshot,
        history,
    })
}

/// Affine-standardized, optionally Gaussian-transformed regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetCoding {
    pub transform: TargetTransform,
    pub mean: f64,
    pub std: f64,
}

impl TargetCoding {
    pub fn identity() -> Self {
        Self {
            transform: TargetTransform::Identity,
            mean: 0.0,
            std: 1.0,
        }
    }

    pub fn fit(y_train: &[f64], gaussian: bool) -> Result<Self> {
        if y_train.is_empty() {
            return Err(Error::Data("empty training target".into()));
        }
        let transform = if gaussian {
            fit_gaussian_target(y_train)?
        } else {
            TargetTransform::Identity
        };
        let z: Vec<f64> = y_train.iter().map(|&v| transform.forward(v)).collect();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            transform,
            mean,
            std: var.sqrt().max(MIN_STD),
        })
    }

    pub fn encode(&self, y: f64) -> f64 {
        (self.transform.forward(y) - self.mean) / self.std
    }

    pub fn decode(&self, out: f64) -> f64 {
        self.transform.inverse(out * self.std + self.mean)
    }
}

/// Inputs paired with training targets already in model space.
#[derive(Debug, Clone)]
pub struct SupervisedData<T> {
    pub x: Tensor<T>,
    pub y: Vec<T>,
}

/// Network, optimizer and data for one training run.
pub struct SupervisedTrainer<T> {
    pub network: Network<T>,
    pub task: Task,
    pub optimizer: AdamW<T>,
    pub coding: TargetCoding,
    pub train: SupervisedData<T>,
    pub val_x: Tensor<T>,
    /// Early-stopping targets on the original scale.
    pub val_y: Vec<f64>,
}

impl<T: Scalar> SupervisedTrainer<T> {
    /// `y_train` and `val_y` are on the original scale. Regression targets
    /// are fitted with `TargetCoding::fit`.
    pub fn new(
        network: Network<T>,
        task: Task,
        opt: &OptimizerConfig,
        gaussian_target: bool,
        x_train: Tensor<T>,
        y_train: &[f64],
        val_x: Tensor<T>,
        val_y: Vec<f64>,
    ) -> Result<Self> {
        opt.validate()?;
        if x_train.rows() != y_train.len() || val_x.rows() != val_y.len() {
            return Err(Error::Contract("input and target row counts differ".into()));
        }
        if val_y.is_empty() {
            return Err(Error::Data("no early-stopping rows".into()));
        }
        let coding = match task {
            Task::Classification => TargetCoding::identity(),
            Task::Regression => TargetCoding::fit(y_train, gaussian_target)?,
        };
        let y = y_train.iter().map(|&v| T::lit(coding.encode(v))).collect();
        Ok(Self {
            network,
            task,
            optimizer: AdamW::new(opt.eps, opt.weight_decay),
            coding,
            train: SupervisedData { x: x_train, y },
            val_x,
            val_y,
        })
    }

    fn loss(&self) -> Loss {
        match self.task {
            Task::Classification => Loss::BceWithLogits,
            Task::Regression => Loss::MeanSquared,
        }
    }

    /// Class labels or original-scale regression values.
    pub fn predict(&mut self, x: &Tensor<T>) -> Result<Vec<f64>> {
        let out = self.network.predict(x)?;
        Ok(out
            .into_iter()
            .map(|v| {
                let v = v.as_f64();
                match self.task {
                    Task::Classification if v.is_finite() => f64::from(v >= 0.0),
                    Task::Classification => f64::NAN,
                    Task::Regression => self.coding.decode(v),
                }
            })
            .collect())
    }
}

impl<T: Scalar> Trainable for SupervisedTrainer<T> {
    fn n_train(&self) -> usize {
        self.train.y.len()
    }

    fn train_batch(&mut self, rows: &[usize], lr: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
        let x = self.train.x.select_rows(rows);
        let y: Vec<T> = rows.iter().map(|&i| self.train.y[i]).collect();
        zero_grads(&mut self.network);
        let mut ctx = Ctx { training: true, rng };
        let out = self.network.forward(x, &mut ctx)?;
        if !out.all_finite() {
            return Ok(f64::NAN);
        }
        let (loss, grad) = loss_and_grad(self.loss(), &out.data, &y)?;
        self.network.backward(Tensor::new(out.shape, grad)?)?;
        self.optimizer.step(&mut self.network, lr);
        Ok(loss.as_f64())
    }

    fn evaluate(&mut self) -> Result<f64> {
        let val_x = self.val_x.clone();
        let pred = self.predict(&val_x)?;
        if pred.iter().any(|v| !v.is_finite()) {
            return Ok(f64::NAN);
        }
        match self.task {
            Task::Classification => metric_accuracy(&pred, &self.val_y),
            Task::Regression => metric_mae(&pred, &self.val_y),
        }
    }

    fn snapshot(&mut self) -> Snapshot {
        Snapshot::capture(&mut self.network)
    }

    fn restore(&mut self, snapshot: &Snapshot) -> Result<()> {
        snapshot.restore(&mut self.network)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Scripted criterion sequence with an optional NaN loss epoch.
    struct Scripted {
        values: Vec<f64>,
        nan_epoch: Option<usize>,
        epoch: usize,
        state: f64,
    }

    impl Trainable for Scripted {
        fn n_train(&self) -> usize {
            10
        }
        fn train_batch(&mut self, _rows: &[usize], _lr: f64, _rng: &mut ChaCha8Rng) -> Result<f64> {
            self.epoch += 1;
            self.state = self.epoch as f64;
            Ok(if Some(self.epoch) == self.nan_epoch { f64::NAN } else { 1.0 })
        }
        fn evaluate(&mut self) -> Result<f64> {
            Ok(self.values[(self.epoch - 1).min(self.values.len() - 1)])
        }
        fn snapshot(&mut self) -> Snapshot {
            Snapshot {
                tensors: vec![Tensor::new(vec![1], vec![self.state]).unwrap()],
            }
        }
        fn restore(&mut self, s: &Snapshot) -> Result<()> {
            self.state = s.tensors[0].data[0];
            Ok(())
        }
    }

    fn run(values: Vec<f64>, nan_epoch: Option<usize>, criterion: Criterion) -> (TrainState, f64) {
        let mut m = Scripted {
            values,
            nan_epoch,
            epoch: 0,
            state: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let st = fit(&mut m, &OptimizerConfig::default(), EarlyStopping::new(criterion), 256, &mut rng).unwrap();
        (st, m.state)
    }

    #[test]
    fn plateau_stops_at_patience() {
        let (st, state) = run(vec![0.7, 0.6, 0.7], None, Criterion::Accuracy);
        assert_eq!((st.epochs_run, st.best_epoch, st.stop_reason), (41, 1, StopReason::Patience));
        assert_eq!(st.best_criterion, 0.7);
        assert_eq!(state, 1.0);
    }

    #[test]
    fn strict_improvement_runs_to_cap() {
        let values: Vec<f64> = (0..400).map(|i| 100.0 - i as f64 * 0.1).collect();
        let (st, state) = run(values, None, Criterion::Mae);
        assert_eq!((st.epochs_run, st.best_epoch, st.stop_reason), (400, 400, StopReason::MaxEpochs));
        assert_eq!(state, 400.0);
    }

    #[test]
    fn nan_loss_diverges() {
        let (st, state) = run(vec![0.5, 0.6, 0.7], Some(3), Criterion::Accuracy);
        assert_eq!((st.epochs_run, st.stop_reason), (3, StopReason::Divergence));
        assert_eq!(st.best_criterion, 0.0);
        assert_eq!(state, 2.0);
    }

    #[test]
    fn minibatch_tail_is_merged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = minibatches(513, 256, &mut rng);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![256, 257]);
        let b = minibatches(100, 256, &mut rng);
        assert_eq!(b.len(), 1);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn target_coding_round_trips() {
        let y = [3.0, -1.0, 7.5, 2.0, 2.5, 10.0];
        for gaussian in [false, true] {
            let c = TargetCoding::fit(&y, gaussian).unwrap();
            for &v in &y {
                assert!((c.decode(c.encode(v)) - v).abs() < 1e-9, "{gaussian} {v}");
            }
        }
    }
}
