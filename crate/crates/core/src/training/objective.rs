//! Batch loss and gradients. Samples run in parallel; per-sample gradients
//! are summed strictly in sample order so the result does not depend on the
//! thread count.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::loss::label_smoothed_ce;
use crate::error::{Error, Result};
use crate::network::{Gammas, Model, Params};
use crate::real::Real;

/// Embedded inputs with their targets and per-sample dropout thresholds.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a, T> {
    pub inputs: &'a [Array2<T>],
    pub targets: &'a [usize],
    /// Empty, or one entry per sample.
    pub gammas: &'a [Gammas<T>],
}

impl<'a, T: Real> Batch<'a, T> {
    pub fn new(inputs: &'a [Array2<T>], targets: &'a [usize]) -> Self {
        Batch {
            inputs,
            targets,
            gammas: &[],
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn check(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        if self.targets.len() != self.inputs.len() || !(self.gammas.is_empty() || self.gammas.len() == self.inputs.len()) {
            return Err(Error::Data("batch inputs, targets and thresholds disagree in length".into()));
        }
        Ok(())
    }

    fn gammas(&self, i: usize) -> Option<&[T]> {
        self.gammas.get(i).and_then(|g| g.as_deref())
    }
}

/// Mean smoothed cross entropy over the batch.
pub fn batch_loss<T: Real>(model: &Model<T>, batch: &Batch<'_, T>, smoothing: f64) -> Result<T> {
    batch.check()?;
    let losses = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let out = model.forward(&batch.inputs[i], batch.gammas(i))?;
            Ok(label_smoothed_ce(out.logits.view(), batch.targets[i], smoothing)?.0)
        })
        .collect::<Result<Vec<T>>>()?;
    let n = T::of(batch.len() as f64);
    Ok(losses.into_iter().fold(T::zero(), |a, b| a + b) / n)
}

/// Mean loss and its gradient with respect to every parameter.
pub fn batch_loss_and_grad<T: Real>(model: &Model<T>, batch: &Batch<'_, T>, smoothing: f64) -> Result<(T, Params<T>)> {
    batch.check()?;
    let n = T::of(batch.len() as f64);
    let parts = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let out = model.forward(&batch.inputs[i], batch.gammas(i))?;
            let (loss, mut dlogits) = label_smoothed_ce(out.logits.view(), batch.targets[i], smoothing)?;
            dlogits.mapv_inplace(|v| v / n);
            let mut grads = model.params.zeros_like();
            model.backward(&out, dlogits.view(), &mut grads)?;
            Ok((loss, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut parts = parts.into_iter();
    let (mut loss, mut grads) = parts.next().expect("non-empty batch");
    for (l, g) in parts {
        loss += l;
        grads.add_assign(&g);
    }
    Ok((loss / n, grads))
}

/// Eval-mode logits for each input.
pub fn predict<T: Real>(model: &Model<T>, inputs: &[Array2<T>]) -> Result<Vec<Array1<T>>> {
    inputs
        .par_iter()
        .map(|x| model.forward(x, None).map(|o| o.logits))
        .collect()
}
