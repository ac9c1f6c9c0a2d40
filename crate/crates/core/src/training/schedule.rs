//! Learning-rate schedules built on one cosine curve
//! `lr(p) = lr_min + (lr0 - lr_min) * (1 + cos(pi * p / cycle)) / 2`
//! evaluated at an integer position `p`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleMode {
    /// Position advances by one after each validation plateau and wraps to
    /// the cycle start after the last step.
    PlateauStep,
    /// Position advances every epoch and returns to 0 on a plateau.
    PlateauRestart,
    /// Position advances every epoch, wrapping each cycle.
    Cosine,
}

impl ScheduleMode {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleMode::PlateauStep => "plateau-step",
            ScheduleMode::PlateauRestart => "plateau-restart",
            ScheduleMode::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "plateau-step" => Ok(ScheduleMode::PlateauStep),
            "plateau-restart" => Ok(ScheduleMode::PlateauRestart),
            "cosine" => Ok(ScheduleMode::Cosine),
            _ => Err(Error::Config(format!("unknown scheduler mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub mode: ScheduleMode,
    pub lr: f64,
    pub lr_min: f64,
    /// Cosine positions per cycle.
    pub cycle_len: usize,
    /// Epochs without validation improvement that count as a plateau.
    pub patience: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub config: ScheduleConfig,
    pub position: usize,
    pub best: f64,
    pub since_improvement: usize,
}

impl LrSchedule {
    pub fn new(config: ScheduleConfig) -> Result<Self> {
        if !(config.lr > 0.0 && config.lr_min > 0.0 && config.lr_min <= config.lr) {
            return Err(Error::Config("learning rates must satisfy 0 < lr_min <= lr".into()));
        }
        if config.cycle_len == 0 || config.patience == 0 {
            return Err(Error::Config("cycle length and scheduler patience must be positive".into()));
        }
        Ok(LrSchedule {
            config,
            position: 0,
            best: f64::INFINITY,
            since_improvement: 0,
        })
    }

    /// Learning rate for the coming epoch.
    pub fn lr(&self) -> f64 {
        let c = &self.config;
        let phase = std::f64::consts::PI * self.position as f64 / c.cycle_len as f64;
        c.lr_min + (c.lr - c.lr_min) * 0.5 * (1.0 + phase.cos())
    }

    /// Records the validation loss of the finished epoch.
    pub fn observe(&mut self, val_loss: f64) {
        if val_loss < self.best {
            self.best = val_loss;
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        let plateau = self.since_improvement >= self.config.patience;
        if plateau {
            self.since_improvement = 0;
        }
        let cycle = self.config.cycle_len;
        match self.config.mode {
            ScheduleMode::PlateauStep => {
                if plateau {
                    self.position = (self.position + 1) % cycle;
                }
            }
            ScheduleMode::PlateauRestart => {
                self.position = if plateau { 0 } else { (self.position + 1) % cycle };
            }
            ScheduleMode::Cosine => self.position = (self.position + 1) % cycle,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mode: ScheduleMode) -> ScheduleConfig {
        ScheduleConfig {
            mode,
            lr: 1e-4,
            lr_min: 1e-6,
            cycle_len: 10,
            patience: 3,
        }
    }

    #[test]
    fn epoch_zero_is_initial_rate() {
        for m in [ScheduleMode::PlateauStep, ScheduleMode::PlateauRestart, ScheduleMode::Cosine] {
            assert_eq!(LrSchedule::new(cfg(m)).unwrap().lr(), 1e-4);
        }
    }

    #[test]
    fn improving_loss_keeps_cycle_start() {
        let mut s = LrSchedule::new(cfg(ScheduleMode::PlateauStep)).unwrap();
        for e in 0..50 {
            s.observe(10.0 - e as f64 * 0.1);
            assert_eq!(s.lr(), 1e-4);
        }
    }

    #[test]
    fn plateau_trace() {
        let mut s = LrSchedule::new(cfg(ScheduleMode::PlateauStep)).unwrap();
        s.observe(1.0);
        s.observe(1.0);
        s.observe(1.0);
        assert_eq!(s.lr(), 1e-4);
        s.observe(1.0);
        let want = 1e-6 + (1e-4 - 1e-6) * 0.5 * (1.0 + (std::f64::consts::PI / 10.0).cos());
        assert_eq!(s.lr(), want);
        assert!(s.lr() < 1e-4 && s.lr() > 1e-6);
    }

    #[test]
    fn rate_stays_in_range() {
        for m in [ScheduleMode::PlateauStep, ScheduleMode::PlateauRestart, ScheduleMode::Cosine] {
            let mut s = LrSchedule::new(cfg(m)).unwrap();
            for _ in 0..200 {
                s.observe(1.0);
                assert!(s.lr() > 0.0 && s.lr() <= 1e-4);
            }
        }
    }

    #[test]
    fn restart_mode_resets_on_plateau() {
        let mut s = LrSchedule::new(cfg(ScheduleMode::PlateauRestart)).unwrap();
        s.observe(1.0);
        s.observe(2.0);
        assert_eq!(s.position, 2);
        s.observe(2.0);
        s.observe(2.0);
        assert_eq!(s.position, 0);
    }
}
