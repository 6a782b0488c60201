use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Binary cross-entropy on logits.
    BceWithLogits,
    MeanSquared,
}

fn check<T>(pred: &[T], y: &[T]) -> Result<()> {
    if pred.len() != y.len() || pred.is_empty() {
        return Err(Error::Contract(format!(
            "loss inputs must be non-empty and equal length, got {} and {}",
            pred.len(),
            y.len()
        )));
    }
    Ok(())
}

/// Mean BCE in the stable form `max(z,0) - z·y + ln(1 + e^{-|z|})`, with its
/// gradient `(σ(z) - y)/N`.
pub fn bce_with_logits<T: Scalar>(logits: &[T], y: &[T]) -> Result<(T, Vec<T>)> {
    check(logits, y)?;
    let n = T::lit(logits.len() as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.iter().zip(y) {
        total += z.max(T::zero()) - z * t + (-z.abs()).exp().ln_1p();
        let s = if z >= T::zero() {
            T::one() / (T::one() + (-z).exp())
        } else {
            let e = z.exp();
            e / (T::one() + e)
        };
        grad.push((s - t) / n);
    }
    Ok((total / n, grad))
}

/// Mean squared error with gradient `2(p - y)/N`.
pub fn mse<T: Scalar>(pred: &[T], y: &[T]) -> Result<(T, Vec<T>)> {
    check(pred, y)?;
    let n = T::lit(pred.len() as f64);
    let two = T::lit(2.0);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(y) {
        let d = p - t;
        total += d * d;
        grad.push(two * d / n);
    }
    Ok((total / n, grad))
}

pub fn loss_and_grad<T: Scalar>(loss: Loss, pred: &[T], y: &[T]) -> Result<(T, Vec<T>)> {
    match loss {
        Loss::BceWithLogits => bce_with_logits(pred, y),
        Loss::MeanSquared => mse(pred, y),
    }
}
