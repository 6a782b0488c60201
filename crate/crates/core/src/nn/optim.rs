use serde::{Deserialize, Serialize};

use super::{Layer, Param};
use crate::error::{Error, Result};
use crate::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;

pub const T0_CHOICES: [usize; 6] = [10, 20, 30, 50, 75, 100];
pub const T_MULT_CHOICES: [usize; 2] = [1, 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub t0: usize,
    pub t_mult: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            eps: 1e-8,
            weight_decay: 1e-4,
            t0: 10,
            t_mult: 1,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.t0 >= 1
            && self.t_mult >= 1;
        if !ok {
            return Err(Error::Config(format!("invalid optimizer config {self:?}")));
        }
        Ok(())
    }
}

/// Cosine annealing with warm restarts, evaluated at integer epoch `t`.
/// Cycle `i` lasts `T0·T_mult^i` epochs and the minimum rate is 0.
pub fn cosine_warm_restart_lr(t: usize, t0: usize, t_mult: usize, lr_max: f64) -> f64 {
    let t0 = t0.max(1);
    let (t_cur, t_i) = if t_mult <= 1 {
        (t % t0, t0)
    } else {
        let mut start = 0usize;
        let mut len = t0;
        while t >= start + len {
            start += len;
            len *= t_mult;
        }
        (t - start, len)
    };
    0.5 * lr_max * (1.0 + (std::f64::consts::PI * t_cur as f64 / t_i as f64).cos())
}

/// AdamW with decoupled weight decay: `p ← p(1 - lr·wd)` followed by the
/// bias-corrected Adam step.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(eps: f64, weight_decay: f64) -> Self {
        Self {
            eps,
            weight_decay,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update to every parameter reachable from `model`.
    pub fn step(&mut self, model: &mut dyn Layer<T>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        let (b1, b2) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2));
        let shrink = T::lit(1.0 - lr * self.weight_decay);
        let step_size = T::lit(lr / bc1);
        let bc2_sqrt = T::lit(bc2.sqrt());
        let eps = T::lit(self.eps);
        let mut idx = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.visit_params(&mut |p: &mut Param<T>| {
            if ms.len() <= idx {
                ms.push(vec![T::zero(); p.value.len()]);
                vs.push(vec![T::zero(); p.value.len()]);
            }
            let (m, v) = (&mut ms[idx], &mut vs[idx]);
            for (((w, &g), mi), vi) in p.value.data.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *w *= shrink;
                *mi = b1 * *mi + (T::one() - b1) * g;
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                *w -= step_size * *mi / ((*vi).sqrt() / bc2_sqrt + eps);
            }
            idx += 1;
        });
    }
}

pub fn zero_grads<T: Scalar>(model: &mut dyn Layer<T>) {
    model.visit_params(&mut |p| p.zero_grad());
}
