use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Zero-based rank of `target` among the logits. Ties count against the
/// target only for classes with a lower index.
pub fn rank_of<T: Real>(logits: &Array1<T>, target: usize) -> usize {
    let z = logits[target];
    logits
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > z || (v == z && j < target))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub top1: f64,
    pub top5: f64,
    pub count: usize,
}

/// Per-instance top-1 and top-5 accuracy.
pub fn accuracy<T: Real>(logits: &[Array1<T>], targets: &[usize]) -> Accuracy {
    assert_eq!(logits.len(), targets.len());
    let n = targets.len();
    if n == 0 {
        return Accuracy {
            top1: 0.0,
            top5: 0.0,
            count: 0,
        };
    }
    let ranks: Vec<usize> = logits.iter().zip(targets).map(|(l, &t)| rank_of(l, t)).collect();
    let frac = |k: usize| ranks.iter().filter(|&&r| r < k).count() as f64 / n as f64;
    Accuracy {
        top1: frac(1),
        top5: frac(5),
        count: n,
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub top1: f64,
    pub top5: f64,
    pub schedule: String,
    pub schedule_position: usize,
}

/// Appends one JSON object per line.
pub fn append_jsonl<S: Serialize>(path: &Path, record: &S) -> Result<()> {
    let line = serde_json::to_string(record).map_err(|e| Error::Data(e.to_string()))?;
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<S>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}
