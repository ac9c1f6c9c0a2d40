//! Central finite-difference check of the analytic gradients.
//!
//! For each parameter tensor the reported error is
//! `max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|, floor)`, i.e. the worst
//! entry measured against the tensor's largest gradient magnitude.

use ndarray::Dimension;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::{Model, Params};
use crate::real::Real;
use crate::training::{batch_loss, batch_loss_and_grad, Batch};

/// Smaller steps drown in the rounding noise of an `f32` loss.
pub const FD_STEP_F32: f64 = 1e-2;
pub const FD_STEP_F64: f64 = 1e-5;
pub const FD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::Single => "f32",
            Precision::Double => "f64",
        }
    }

    pub fn default_step(self) -> f64 {
        match self {
            Precision::Single => FD_STEP_F32,
            Precision::Double => FD_STEP_F64,
        }
    }

    pub fn of<T: Real>() -> Self {
        if T::BYTES == 4 {
            Precision::Single
        } else {
            Precision::Double
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorReport {
    pub name: String,
    pub max_rel_error: f64,
    /// Multi-index of the worst entry.
    pub argmax: Vec<usize>,
    pub analytic: f64,
    pub numeric: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub precision: Precision,
    pub step: f64,
    pub floor: f64,
    pub tolerance: f64,
    pub tensors: Vec<TensorReport>,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.pass)
    }

    pub fn worst(&self) -> Option<&TensorReport> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn failures(&self) -> Vec<&TensorReport> {
        self.tensors.iter().filter(|t| !t.pass).collect()
    }
}

/// Compares `analytic` against central differences of the batch loss.
/// `only` restricts the check to tensors whose name starts with a prefix.
pub fn compare_gradients<T: Real>(
    model: &Model<T>,
    batch: &Batch<'_, T>,
    smoothing: f64,
    analytic: &Params<T>,
    step: f64,
    tolerance: f64,
    only: Option<&str>,
) -> Result<FdReport> {
    let mut probe = model.clone();
    let h = T::of(step);
    let mut tensors = Vec::new();
    let analytic_tensors = analytic.tensors();
    for (ti, (name, a)) in analytic_tensors.iter().enumerate() {
        if only.is_some_and(|p| !name.starts_with(p)) {
            continue;
        }
        let mut numeric = Vec::with_capacity(a.len());
        let indices: Vec<_> = a.indexed_iter().map(|(ix, _)| ix).collect();
        for ix in &indices {
            let orig = {
                let mut ts = probe.params.tensors_mut();
                let v = &mut ts[ti].1[ix.clone()];
                let o = *v;
                *v = o + h;
                o
            };
            let up = batch_loss(&probe, batch, smoothing)?;
            probe.params.tensors_mut()[ti].1[ix.clone()] = orig - h;
            let down = batch_loss(&probe, batch, smoothing)?;
            probe.params.tensors_mut()[ti].1[ix.clone()] = orig;
            numeric.push((up.to_f64_lossy() - down.to_f64_lossy()) / (2.0 * step));
        }
        let amax = a.iter().fold(0.0f64, |m, v| m.max(v.to_f64_lossy().abs()));
        let nmax = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let denom = amax.max(nmax).max(FD_FLOOR);
        let mut worst = (0.0f64, 0usize);
        for (k, (av, nv)) in a.iter().zip(&numeric).enumerate() {
            let e = (av.to_f64_lossy() - nv).abs() / denom;
            if e > worst.0 || k == 0 {
                worst = (e, k);
            }
        }
        let (err, k) = worst;
        tensors.push(TensorReport {
            name: name.clone(),
            max_rel_error: err,
            argmax: indices[k].as_array_view().to_vec(),
            analytic: a.iter().nth(k).map(|v| v.to_f64_lossy()).unwrap_or(0.0),
            numeric: numeric[k],
            pass: err <= tolerance,
        });
    }
    Ok(FdReport {
        precision: Precision::of::<T>(),
        step,
        floor: FD_FLOOR,
        tolerance,
        tensors,
    })
}

/// Checks every parameter tensor of `model` on `batch`.
pub fn fd_gradient_check<T: Real>(model: &Model<T>, batch: &Batch<'_, T>, smoothing: f64, step: f64, tolerance: f64) -> Result<FdReport> {
    let (_, analytic) = batch_loss_and_grad(model, batch, smoothing)?;
    compare_gradients(model, batch, smoothing, &analytic, step, tolerance, None)
}
