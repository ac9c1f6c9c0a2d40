use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::real::Real;

/// Numerically stable softmax.
pub fn softmax<T: Real>(logits: ArrayView1<'_, T>) -> Array1<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut p = logits.mapv(|v| (v - max).exp());
    let sum = p.sum();
    p.mapv_inplace(|v| v / sum);
    p
}

/// Cross entropy against the smoothed target (`1 - eps` on `target`,
/// `eps / (C - 1)` on every other class). Returns the loss and its gradient
/// with respect to the logits.
pub fn label_smoothed_ce<T: Real>(logits: ArrayView1<'_, T>, target: usize, eps: f64) -> Result<(T, Array1<T>)> {
    let c = logits.len();
    if target >= c {
        return Err(Error::Data(format!("target {target} out of range for {c} classes")));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Config(format!("label smoothing {eps} outside [0, 1)")));
    }
    let off = if c > 1 { T::of(eps / (c - 1) as f64) } else { T::zero() };
    let on = if c > 1 { T::of(1.0 - eps) } else { T::one() };
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
    let mut loss = T::zero();
    let mut grad = softmax(logits);
    for (j, (&z, g)) in logits.iter().zip(grad.iter_mut()).enumerate() {
        let q = if j == target { on } else { off };
        if q > T::zero() {
            loss += q * (lse - z);
        }
        *g -= q;
    }
    Ok((loss, grad))
}
