//! Central-difference gradient checks in double precision.
//!
//! The probe loss is `Σ r ⊙ layer(x)` for a fixed random `r`. The context rng
//! is reseeded before every forward pass so that stochastic layers draw the
//! same mask for the analytic and the numerical evaluations.

#![allow(dead_code)]

use icftab::lff::{Lff, LffVariant};
use icftab::nn::{
    build_mlp, loss_and_grad, Activation, ActivationKind, BatchNorm, Conv1d, Ctx, Dropout, Layer, LayerNorm, Linear,
    Loss, MeanPool, MlpConfig, Pool1d, PoolKind, ResBlock, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
/// Floor on the relative-error denominator so that exactly-zero gradients
/// compare on an absolute scale.
pub const DENOM_FLOOR: f64 = 1e-3;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOM_FLOOR)
}

pub fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor { shape, data }
}

/// Pushes every entry at least `margin` away from zero, keeping its sign.
pub fn away_from_zero(t: &mut Tensor<f64>, margin: f64) {
    for v in &mut t.data {
        if v.abs() < margin {
            *v = if *v < 0.0 { -margin } else { margin };
        }
    }
}

pub fn randomize_params(layer: &mut dyn Layer<f64>, rng: &mut ChaCha8Rng) {
    layer.visit_params(&mut |p| {
        for v in &mut p.value.data {
            *v = rng.random_range(-1.0..1.0);
        }
    });
}

fn probe_loss(layer: &mut dyn Layer<f64>, x: &Tensor<f64>, r: &[f64], training: bool, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ctx = Ctx { training, rng: &mut rng };
    let out = layer.forward(x.clone(), &mut ctx).expect("forward");
    assert_eq!(out.len(), r.len(), "output size changed between evaluations");
    out.data.iter().zip(r).map(|(a, b)| a * b).sum()
}

fn nudge_param(layer: &mut dyn Layer<f64>, target: usize, delta: f64) {
    let mut seen = 0;
    layer.visit_params(&mut |p| {
        let n = p.value.len();
        if target >= seen && target < seen + n {
            p.value.data[target - seen] += delta;
        }
        seen += n;
    });
}

/// Maximum relative error over the input gradient and every parameter
/// gradient of `layer` at `x`.
pub fn check_layer(layer: &mut dyn Layer<f64>, x: &Tensor<f64>, training: bool, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
    layer.visit_params(&mut |p| p.zero_grad());
    let out = {
        let mut ctx = Ctx { training, rng: &mut mask_rng };
        layer.forward(x.clone(), &mut ctx).expect("forward")
    };
    let r: Vec<f64> = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dx = layer
        .backward(Tensor { shape: out.shape.clone(), data: r.clone() })
        .expect("backward");
    assert_eq!(dx.shape, x.shape, "input gradient shape");
    let mut analytic_params = Vec::new();
    layer.visit_params(&mut |p| analytic_params.extend_from_slice(&p.grad));

    let mut worst: f64 = 0.0;
    let mut xp = x.clone();
    for i in 0..x.len() {
        let v = x.data[i];
        xp.data[i] = v + STEP;
        let hi = probe_loss(layer, &xp, &r, training, seed);
        xp.data[i] = v - STEP;
        let lo = probe_loss(layer, &xp, &r, training, seed);
        xp.data[i] = v;
        worst = worst.max(rel_err(dx.data[i], (hi - lo) / (2.0 * STEP)));
    }
    for (k, &a) in analytic_params.iter().enumerate() {
        nudge_param(layer, k, STEP);
        let hi = probe_loss(layer, x, &r, training, seed);
        nudge_param(layer, k, -2.0 * STEP);
        let lo = probe_loss(layer, x, &r, training, seed);
        nudge_param(layer, k, STEP);
        worst = worst.max(rel_err(a, (hi - lo) / (2.0 * STEP)));
    }
    worst
}

/// Maximum relative error of a loss gradient with respect to its predictions.
pub fn check_loss(loss: Loss, pred: &[f64], y: &[f64]) -> f64 {
    let (_, grad) = loss_and_grad(loss, pred, y).expect("loss");
    let mut p = pred.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let v = p[i];
        p[i] = v + STEP;
        let hi = loss_and_grad(loss, &p, y).expect("loss").0;
        p[i] = v - STEP;
        let lo = loss_and_grad(loss, &p, y).expect("loss").0;
        p[i] = v;
        worst = worst.max(rel_err(grad[i], (hi - lo) / (2.0 * STEP)));
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Linear,
    Conv1d,
    BatchNorm2d,
    BatchNorm3d,
    LayerNorm,
    ReLU,
    LeakyReLU,
    Dropout,
    MeanPool,
    MaxPool,
    AvgPool,
    LffConv1x1,
    LffLinear,
    ResBlock,
    Mlp,
    Bce,
    Mse,
}

pub const CASES: [Case; 17] = [
    Case::Linear,
    Case::Conv1d,
    Case::BatchNorm2d,
    Case::BatchNorm3d,
    Case::LayerNorm,
    Case::ReLU,
    Case::LeakyReLU,
    Case::Dropout,
    Case::MeanPool,
    Case::MaxPool,
    Case::AvgPool,
    Case::LffConv1x1,
    Case::LffLinear,
    Case::ResBlock,
    Case::Mlp,
    Case::Bce,
    Case::Mse,
];

fn norm_layer(channels: usize, rng: &mut ChaCha8Rng) -> Option<Box<dyn Layer<f64>>> {
    match rng.random_range(0..3) {
        0 => None,
        1 => Some(Box::new(BatchNorm::new(channels))),
        _ => Some(Box::new(LayerNorm::new(channels))),
    }
}

fn check_random(layer: &mut dyn Layer<f64>, shape: Vec<usize>, margin: f64, rng: &mut ChaCha8Rng) -> f64 {
    randomize_params(layer, rng);
    let mut x = random_tensor(shape, rng);
    away_from_zero(&mut x, margin);
    let seed = rng.random();
    check_layer(layer, &x, true, seed)
}

/// Runs one randomized shape of `case` and returns its maximum relative error.
pub fn run_case(case: Case, rng: &mut ChaCha8Rng) -> f64 {
    let n = rng.random_range(2..6);
    let l = rng.random_range(2..9);
    let c = rng.random_range(1..5);
    let kind = if rng.random_bool(0.5) { ActivationKind::ReLU } else { ActivationKind::LeakyReLU };
    match case {
        Case::Linear => {
            let out = rng.random_range(1..7);
            check_random(&mut Linear::new(c + 2, out, rng), vec![n, c + 2], 0.0, rng)
        }
        Case::Conv1d => {
            let out = rng.random_range(1..5);
            let k = rng.random_range(1..6);
            check_random(&mut Conv1d::new(c, out, k, rng), vec![n, l, c], 0.0, rng)
        }
        Case::BatchNorm2d => check_random(&mut BatchNorm::new(c), vec![n, c], 0.0, rng),
        Case::BatchNorm3d => check_random(&mut BatchNorm::new(c), vec![n, l, c], 0.0, rng),
        Case::LayerNorm => {
            let shape = if rng.random_bool(0.5) { vec![n, c + 1] } else { vec![n, l, c + 1] };
            check_random(&mut LayerNorm::new(c + 1), shape, 0.0, rng)
        }
        Case::ReLU => check_random(&mut Activation::new(ActivationKind::ReLU), vec![n, l, c], 1e-2, rng),
        Case::LeakyReLU => {
            check_random(&mut Activation::new(ActivationKind::LeakyReLU), vec![n, l, c], 1e-2, rng)
        }
        Case::Dropout => {
            let p = rng.random_range(0.0..0.9);
            check_random(&mut Dropout::new(p).expect("dropout"), vec![n, l, c], 0.0, rng)
        }
        Case::MeanPool => check_random(&mut MeanPool::new(), vec![n, l, c], 0.0, rng),
        Case::MaxPool => check_random(&mut Pool1d::new(PoolKind::MaxPooling), vec![n, l, c], 0.0, rng),
        Case::AvgPool => check_random(&mut Pool1d::new(PoolKind::AvgPooling), vec![n, l, c], 0.0, rng),
        Case::LffConv1x1 | Case::LffLinear => {
            let variant = if case == Case::LffLinear { LffVariant::Linear } else { LffVariant::Conv1x1 };
            let m = rng.random_range(1..6);
            let sigma = rng.random_range(0.1..2.0);
            let mut lff = Lff::new(variant, l, m, sigma, rng).expect("lff");
            let x = random_tensor(vec![n, l], rng);
            let seed = rng.random();
            check_layer(&mut lff, &x, true, seed)
        }
        Case::ResBlock => {
            let out = if rng.random_bool(0.5) { c } else { rng.random_range(1..5) };
            let k = rng.random_range(1..5);
            let mut block = ResBlock {
                conv1: Conv1d::new(c, out, k, rng),
                norm1: norm_layer(out, rng),
                act1: Activation::new(kind),
                dropout: rng.random_bool(0.5).then(|| Dropout::new(0.3).expect("dropout")),
                conv2: Conv1d::new(out, out, k, rng),
                norm2: norm_layer(out, rng),
                shortcut: (out != c).then(|| Conv1d::new(c, out, 1, rng)),
                act_out: Activation::new(kind),
            };
            check_random(&mut block, vec![n, l, c], 0.0, rng)
        }
        Case::Mlp => {
            let cfg = MlpConfig {
                depth: rng.random_range(1..4),
                width: rng.random_range(2..7),
                activation: kind,
                batch_norm: rng.random_bool(0.5),
                dropout: if rng.random_bool(0.5) { 0.2 } else { 0.0 },
            };
            let mut net = build_mlp::<f64>(&cfg, l * c, rng).expect("mlp");
            check_random(&mut net, vec![n, l, c], 0.0, rng)
        }
        Case::Bce | Case::Mse => {
            let len = rng.random_range(1..20);
            let pred: Vec<f64> = (0..len).map(|_| rng.random_range(-4.0..4.0)).collect();
            let y: Vec<f64> = if case == Case::Bce {
                (0..len).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect()
            } else {
                (0..len).map(|_| rng.random_range(-2.0..2.0)).collect()
            };
            let loss = if case == Case::Bce { Loss::BceWithLogits } else { Loss::MeanSquared };
            check_loss(loss, &pred, &y)
        }
    }
}
