//! Ablation grid over the architectural switches: spatial windows, temporal
//! block length, temporal shift, edge bias and attention dropout.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::{EdgeBias, Model, ModelConfig};
use crate::preprocess::SkeletonSequence;
use crate::training::{evaluate, train, TrainConfig, TrainState};
use crate::windowing::WindowMode;

#[derive(Debug, Clone, PartialEq)]
pub struct AblationAxes {
    pub windows: Vec<WindowMode>,
    pub block_len: Vec<usize>,
    pub shift: Vec<bool>,
    pub edge_bias: Vec<EdgeBias>,
    pub regularizer: Vec<bool>,
}

impl AblationAxes {
    /// Every value of every axis.
    pub fn full() -> Self {
        AblationAxes {
            windows: vec![WindowMode::One, WindowMode::Two, WindowMode::Four],
            block_len: vec![2, 4],
            shift: vec![true, false],
            edge_bias: vec![EdgeBias::Hard, EdgeBias::Without, EdgeBias::Learnable],
            regularizer: vec![true, false],
        }
    }

    /// Only the values of `base`.
    pub fn single(base: &ModelConfig) -> Self {
        AblationAxes {
            windows: vec![base.windows],
            block_len: vec![base.block_len],
            shift: vec![base.shift],
            edge_bias: vec![base.edge_bias],
            regularizer: vec![base.regularizer],
        }
    }

    /// Model configurations in row-major order (windows outermost).
    pub fn configs(&self, base: &ModelConfig) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for &windows in &self.windows {
            for &block_len in &self.block_len {
                for &shift in &self.shift {
                    for &edge_bias in &self.edge_bias {
                        for &regularizer in &self.regularizer {
                            let span = block_len.pow(base.layers as u32);
                            out.push(ModelConfig {
                                windows,
                                block_len,
                                shift,
                                edge_bias,
                                regularizer,
                                frames: base.frames.div_ceil(span) * span,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub windows: usize,
    pub block_len: usize,
    pub shift: bool,
    pub edge_bias: String,
    pub regularizer: bool,
    pub frames: usize,
    /// `"ok"` or the error of a failed run.
    pub status: String,
    pub epochs: usize,
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
    pub top1: Option<f64>,
    pub top5: Option<f64>,
}

fn run_one(cfg: &ModelConfig, train_cfg: &TrainConfig, train_set: &[SkeletonSequence], val_set: &[SkeletonSequence]) -> Result<(usize, f64, f64, f64, f64)> {
    let model = Model::<f32>::new(cfg.clone())?;
    let mut state = TrainState::new(model, train_cfg)?;
    let outcome = train(&mut state, train_set, val_set, train_cfg, None)?;
    let last = outcome.records.last().expect("at least one epoch");
    let (acc, _) = evaluate(&state.model, val_set, train_cfg.label_smoothing)?;
    Ok((outcome.records.len(), last.train_loss, last.val_loss, acc.top1, acc.top5))
}

/// Trains and evaluates every configuration of the grid. Frame counts are
/// raised to the next multiple of `block_len^layers` where needed. A failed
/// run is recorded in its row and the grid continues.
pub fn run_ablation_grid(
    base: &ModelConfig,
    axes: &AblationAxes,
    train_cfg: &TrainConfig,
    train_set: &[SkeletonSequence],
    val_set: &[SkeletonSequence],
) -> Vec<AblationRow> {
    axes.configs(base)
        .par_iter()
        .map(|cfg| {
            let result = run_one(cfg, train_cfg, train_set, val_set);
            let mut row = AblationRow {
                windows: cfg.windows.count(),
                block_len: cfg.block_len,
                shift: cfg.shift,
                edge_bias: cfg.edge_bias.name().into(),
                regularizer: cfg.regularizer,
                frames: cfg.frames,
                status: "ok".into(),
                epochs: 0,
                train_loss: None,
                val_loss: None,
                top1: None,
                top5: None,
            };
            match result {
                Ok((epochs, tl, vl, t1, t5)) => {
                    row.epochs = epochs;
                    row.train_loss = Some(tl);
                    row.val_loss = Some(vl);
                    row.top1 = Some(t1);
                    row.top5 = Some(t5);
                }
                Err(e) => {
                    log::warn!("ablation run failed: {e}");
                    row.status = e.to_string();
                }
            }
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_grid_has_72_rows() {
        let base = ModelConfig::toy(4);
        let cfgs = AblationAxes::full().configs(&base);
        assert_eq!(cfgs.len(), 72);
        assert!(cfgs.iter().all(|c| c.validate().is_ok()));
        assert!(cfgs.iter().filter(|c| c.block_len == 4).all(|c| c.frames == 16));
    }

    #[test]
    fn two_by_two_grid() {
        let base = ModelConfig::toy(4);
        let mut axes = AblationAxes::single(&base);
        axes.shift = vec![true, false];
        axes.regularizer = vec![true, false];
        assert_eq!(axes.configs(&base).len(), 4);
    }
}
