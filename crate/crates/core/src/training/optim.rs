use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Params;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW with decoupled weight decay applied to every tensor:
///
/// ```text
/// p <- p - lr * wd * p
/// m <- b1 m + (1 - b1) g,   v <- b2 v + (1 - b2) g^2
/// p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Params<T>,
    pub v: Params<T>,
}

impl<T: Real> AdamW<T> {
    pub fn new(config: AdamWConfig, params: &Params<T>) -> Self {
        AdamW {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut Params<T>, grads: &Params<T>, lr: f64) -> Result<()> {
        if let Some(name) = grads.all_finite() {
            return Err(Error::Numeric(format!("gradient of {name} at optimizer step {}", self.step + 1)));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = T::of(1.0 - c.beta1.powi(t));
        let bc2 = T::of(1.0 - c.beta2.powi(t));
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let decay = T::one() - T::of(lr * c.weight_decay);
        let lr = T::of(lr);
        let eps = T::of(c.eps);
        let mut ms = self.m.tensors_mut();
        let mut vs = self.v.tensors_mut();
        for (((_, mut p), (_, g)), ((_, m), (_, v))) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(ms.iter_mut().zip(vs.iter_mut()))
        {
            Zip::from(&mut p).and(&g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let update = (*m / bc1) / ((*v / bc2).sqrt() + eps);
                *p = *p * decay - lr * update;
            });
        }
        if let Some(name) = params.all_finite() {
            return Err(Error::Numeric(format!("parameter {name} after optimizer step {}", self.step)));
        }
        Ok(())
    }
}
