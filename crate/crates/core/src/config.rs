//! Flat `section.key = value` run configuration.
//!
//! Every configurable value of the pipeline has one dotted key with a
//! built-in default. Values are layered as defaults, then a config file,
//! then explicit overrides; unknown keys and unparsable values are rejected
//! when they are set.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data_io::{Split, SyntheticSpec};
use crate::error::{Error, Result};
use crate::network::{EdgeBias, ModelConfig};
use crate::preprocess::AugmentConfig;
use crate::training::{ScheduleMode, TrainConfig};
use crate::verification::AblationAxes;
use crate::windowing::WindowMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Uint,
    Float,
    Bool,
    Text,
    OneOf(&'static [&'static str]),
    /// Comma-separated list of values from the set.
    ListOf(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub kind: Kind,
    pub help: &'static str,
}

const WINDOWS: &[&str] = &["1", "2", "4"];
const EDGE_BIAS: &[&str] = &["with", "without", "learnable", "literal"];
const ON_OFF: &[&str] = &["on", "off"];
const SPLITS: &[&str] = &["train", "val", "test"];

macro_rules! key {
    ($k:literal, $d:literal, $kind:expr, $h:literal) => {
        KeySpec {
            key: $k,
            default: $d,
            kind: $kind,
            help: $h,
        }
    };
}

pub const KEYS: &[KeySpec] = &[
    key!("model.frames", "64", Kind::Uint, "input frames F"),
    key!("model.block_len", "2", Kind::Uint, "temporal block length T"),
    key!("model.layers", "2", Kind::Uint, "part attention layers N"),
    key!("model.blocks_per_layer", "2", Kind::Uint, "graph attention blocks per layer M"),
    key!("model.heads", "4", Kind::Uint, "attention heads H"),
    key!("model.embed_dim", "64", Kind::Uint, "embedding width d'"),
    key!("model.fourier_sigma", "1.0", Kind::Float, "Fourier frequency scale"),
    key!("model.ff_ratio", "4", Kind::Uint, "feed-forward expansion"),
    key!("model.windows", "4", Kind::OneOf(WINDOWS), "spatial windows"),
    key!("model.edge_bias", "with", Kind::OneOf(EDGE_BIAS), "edge bias variant"),
    key!("model.shift", "true", Kind::Bool, "temporal shift on odd blocks"),
    key!("model.regularizer", "true", Kind::Bool, "attention dropout in training"),
    key!("model.seed", "0", Kind::Uint, "parameter initialisation seed"),
    key!("model.toy", "false", Kind::Bool, "replace the sizes above by the toy architecture"),
    key!("augment.enabled", "true", Kind::Bool, "training-time augmentation"),
    key!("augment.shear_range", "0.1", Kind::Float, "max absolute shear"),
    key!("augment.rotation_range", "10", Kind::Float, "max absolute rotation in degrees"),
    key!("augment.hand_mask_prob", "0.2", Kind::Float, "fraction of frames with masked hands"),
    key!("augment.speed_min", "0.8", Kind::Float, "lowest speed factor"),
    key!("augment.speed_max", "1.2", Kind::Float, "highest speed factor"),
    key!("train.lr", "1e-4", Kind::Float, "initial learning rate"),
    key!("train.lr_min_ratio", "0.01", Kind::Float, "schedule floor as a fraction of lr"),
    key!("train.epochs_max", "400", Kind::Uint, "maximum epochs"),
    key!("train.early_stop_patience", "60", Kind::Uint, "epochs without improvement before stopping"),
    key!("train.scheduler", "plateau-step", Kind::OneOf(&["plateau-step", "plateau-restart", "cosine"]), "learning-rate schedule"),
    key!("train.scheduler_patience", "20", Kind::Uint, "plateau length that advances the schedule"),
    key!("train.cycle_len", "10", Kind::Uint, "cosine positions per cycle"),
    key!("train.label_smoothing", "0.1", Kind::Float, "label smoothing epsilon"),
    key!("train.batch_size", "16", Kind::Uint, "batch size"),
    key!("train.weight_decay", "0.01", Kind::Float, "AdamW weight decay"),
    key!("train.seed", "0", Kind::Uint, "shuffling, augmentation and dropout seed"),
    key!("train.threads", "0", Kind::Uint, "worker threads, 0 for all cores"),
    key!("train.resume", "", Kind::Text, "training state checkpoint to resume from"),
    key!("data.manifest", "", Kind::Text, "dataset manifest"),
    key!("data.train_split", "train", Kind::OneOf(SPLITS), "split used for training"),
    key!("data.val_split", "val", Kind::OneOf(SPLITS), "split used for validation"),
    key!("data.eval_split", "test", Kind::OneOf(SPLITS), "split used by eval"),
    key!("output.dir", "out", Kind::Text, "output directory"),
    key!("checkpoint.path", "", Kind::Text, "model checkpoint for eval and finetune"),
    key!("preprocess.input", "", Kind::Text, "sequence or full-pose file; empty processes data.manifest"),
    key!("preprocess.format", "auto", Kind::OneOf(&["auto", "seq", "pose"]), "input format"),
    key!("preprocess.frames", "0", Kind::Uint, "resample to this many frames, 0 keeps the length"),
    key!("synth.classes", "8", Kind::Uint, "synthetic classes"),
    key!("synth.per_class", "20", Kind::Uint, "sequences per class"),
    key!("synth.frames_min", "24", Kind::Uint, "shortest sequence"),
    key!("synth.frames_max", "48", Kind::Uint, "longest sequence"),
    key!("synth.noise", "2.0", Kind::Float, "coordinate jitter in pixels"),
    key!("synth.seed", "0", Kind::Uint, "generator seed"),
    key!("synth.train_fraction", "0.8", Kind::Float, "training share per class"),
    key!("synth.val_fraction", "0.0", Kind::Float, "validation share per class"),
    key!("gradcheck.precision", "both", Kind::OneOf(&["f32", "f64", "both"]), "precision of the check"),
    key!("gradcheck.toy", "true", Kind::Bool, "use the toy architecture shape"),
    key!("gradcheck.classes", "3", Kind::Uint, "classes of the checked model"),
    key!("gradcheck.batch", "2", Kind::Uint, "samples in the checked batch"),
    key!("gradcheck.step_f32", "1e-2", Kind::Float, "difference step in single precision"),
    key!("gradcheck.step_f64", "1e-5", Kind::Float, "difference step in double precision"),
    key!("gradcheck.tol_f32", "1e-3", Kind::Float, "relative error bound in single precision"),
    key!("gradcheck.tol_f64", "1e-5", Kind::Float, "relative error bound in double precision"),
    key!("gradcheck.seed", "0", Kind::Uint, "input sampling seed"),
    key!("gradcheck.only", "", Kind::Text, "check only tensors whose name starts with this prefix"),
    key!("ablate.toy", "true", Kind::Bool, "use the toy architecture shape"),
    key!("ablate.windows", "1,2,4", Kind::ListOf(WINDOWS), "window counts"),
    key!("ablate.block_len", "2,4", Kind::ListOf(&["1", "2", "3", "4", "5", "6", "7", "8"]), "temporal block lengths"),
    key!("ablate.shift", "on,off", Kind::ListOf(ON_OFF), "temporal shift settings"),
    key!("ablate.edge_bias", "with,without,learnable", Kind::ListOf(EDGE_BIAS), "edge bias variants"),
    key!("ablate.regularizer", "on,off", Kind::ListOf(ON_OFF), "attention dropout settings"),
    key!("ablate.epochs", "5", Kind::Uint, "epochs per grid run"),
    key!("inspect.shifted", "false", Kind::Bool, "show the shifted last-block mask"),
    key!("inspect.window", "0", Kind::Uint, "window whose block mask is printed"),
];

pub fn key_spec(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.key == key)
}

fn check_value(spec: &KeySpec, value: &str) -> Result<()> {
    let bad = |what: &str| Err(Error::Config(format!("{} = {value:?}: expected {what}", spec.key)));
    match spec.kind {
        Kind::Uint => value.parse::<u64>().map(|_| ()).or_else(|_| bad("a nonnegative integer")),
        Kind::Float => match value.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(()),
            _ => bad("a finite number"),
        },
        Kind::Bool => parse_bool(value).map(|_| ()).or_else(|_| bad("true or false")),
        Kind::Text => Ok(()),
        Kind::OneOf(set) if set.contains(&value) => Ok(()),
        Kind::OneOf(set) => bad(&format!("one of {}", set.join("|"))),
        Kind::ListOf(set) => {
            let items: Vec<&str> = value.split(',').map(str::trim).collect();
            if items.iter().all(|i| set.contains(i)) {
                Ok(())
            } else {
                bad(&format!("a comma list of {}", set.join("|")))
            }
        }
    }
}

fn parse_bool(v: &str) -> std::result::Result<bool, ()> {
    match v {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|k| (k.key, k.default.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let spec = key_spec(key).ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
        let value = value.trim();
        check_value(spec, value)?;
        self.values.insert(spec.key, value.to_string());
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment line.
    pub fn parse_text(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected key = value", path.display(), i + 1))
            })?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (k, v) in Self::parse_text(&text, path)? {
            self.set(&k, &v)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("config key {key} is not registered"))
    }

    fn uint(&self, key: &str) -> usize {
        self.get(key).parse().expect("validated on set")
    }

    fn float(&self, key: &str) -> f64 {
        self.get(key).parse().expect("validated on set")
    }

    fn flag(&self, key: &str) -> bool {
        parse_bool(self.get(key)).expect("validated on set")
    }

    fn list(&self, key: &str) -> Vec<&str> {
        self.get(key).split(',').map(str::trim).collect()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::Config(format!("{key} must be set")))
    }

    pub fn split(&self, key: &str) -> Split {
        Split::parse(self.get(key)).expect("validated on set")
    }

    pub fn threads(&self) -> usize {
        self.uint("train.threads")
    }

    /// Resolved configuration, one `key = value` line per key in key order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn model_config(&self, num_classes: usize) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            frames: self.uint("model.frames"),
            block_len: self.uint("model.block_len"),
            layers: self.uint("model.layers"),
            blocks_per_layer: self.uint("model.blocks_per_layer"),
            heads: self.uint("model.heads"),
            embed_dim: self.uint("model.embed_dim"),
            fourier_sigma: self.float("model.fourier_sigma"),
            ff_ratio: self.uint("model.ff_ratio"),
            windows: WindowMode::parse(self.get("model.windows"))?,
            edge_bias: EdgeBias::parse(self.get("model.edge_bias"))?,
            shift: self.flag("model.shift"),
            regularizer: self.flag("model.regularizer"),
            num_classes,
            seed: self.uint("model.seed") as u64,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Toy-sized architecture keeping the switches of `model.*`.
    pub fn toy_model_config(&self, num_classes: usize) -> Result<ModelConfig> {
        let full = self.model_config(num_classes)?;
        let cfg = ModelConfig {
            windows: full.windows,
            edge_bias: full.edge_bias,
            shift: full.shift,
            regularizer: full.regularizer,
            seed: full.seed,
            fourier_sigma: full.fourier_sigma,
            ..ModelConfig::toy(num_classes)
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn augment_config(&self) -> Result<Option<AugmentConfig>> {
        if !self.flag("augment.enabled") {
            return Ok(None);
        }
        let a = AugmentConfig {
            shear_range: self.float("augment.shear_range"),
            rotation_range: self.float("augment.rotation_range"),
            hand_mask_prob: self.float("augment.hand_mask_prob"),
            speed_range: (self.float("augment.speed_min"), self.float("augment.speed_max")),
            seed: self.uint("train.seed") as u64,
        };
        a.validate()?;
        Ok(Some(a))
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            lr: self.float("train.lr"),
            lr_min_ratio: self.float("train.lr_min_ratio"),
            epochs_max: self.uint("train.epochs_max"),
            early_stop_patience: self.uint("train.early_stop_patience"),
            scheduler: ScheduleMode::parse(self.get("train.scheduler"))?,
            scheduler_patience: self.uint("train.scheduler_patience"),
            cycle_len: self.uint("train.cycle_len"),
            label_smoothing: self.float("train.label_smoothing"),
            batch_size: self.uint("train.batch_size"),
            weight_decay: self.float("train.weight_decay"),
            seed: self.uint("train.seed") as u64,
            augment: self.augment_config()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn synth_spec(&self) -> Result<SyntheticSpec> {
        let spec = SyntheticSpec {
            classes: self.uint("synth.classes"),
            per_class: self.uint("synth.per_class"),
            frames_min: self.uint("synth.frames_min"),
            frames_max: self.uint("synth.frames_max"),
            noise: self.float("synth.noise"),
            seed: self.uint("synth.seed") as u64,
            train_fraction: self.float("synth.train_fraction"),
            val_fraction: self.float("synth.val_fraction"),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn ablation_axes(&self) -> Result<AblationAxes> {
        let on = |v: &str| v == "on";
        Ok(AblationAxes {
            windows: self
                .list("ablate.windows")
                .into_iter()
                .map(WindowMode::parse)
                .collect::<Result<_>>()?,
            block_len: self
                .list("ablate.block_len")
                .into_iter()
                .map(|v| v.parse().expect("validated on set"))
                .collect(),
            shift: self.list("ablate.shift").into_iter().map(on).collect(),
            edge_bias: self
                .list("ablate.edge_bias")
                .into_iter()
                .map(EdgeBias::parse)
                .collect::<Result<_>>()?,
            regularizer: self.list("ablate.regularizer").into_iter().map(on).collect(),
        })
    }

    pub fn gradcheck_value(&self, key: &str) -> f64 {
        self.float(key)
    }

    pub fn uint_value(&self, key: &str) -> usize {
        self.uint(key)
    }

    pub fn flag_value(&self, key: &str) -> bool {
        self.flag(key)
    }
}
