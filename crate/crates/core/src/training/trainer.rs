use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;

use super::checkpoint::{load_checkpoint, save_checkpoint, TrainMeta};
use super::metrics::{accuracy, append_jsonl, Accuracy, EpochRecord};
use super::objective::{batch_loss, batch_loss_and_grad, predict, Batch};
use super::optim::AdamW;
use super::schedule::LrSchedule;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::network::{Gammas, Model};
use crate::preprocess::{prepare_sequence, SkeletonSequence};
use crate::schema::build_default_schema;

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const STATE_CHECKPOINT: &str = "state.ckpt";
pub const METRICS_LOG: &str = "metrics.jsonl";

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model<f32>,
    pub optimizer: AdamW<f32>,
    pub schedule: LrSchedule,
    /// Completed epochs.
    pub epoch: usize,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
}

impl TrainState {
    pub fn new(model: Model<f32>, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let optimizer = AdamW::new(cfg.adamw(), &model.params);
        Ok(TrainState {
            model,
            optimizer,
            schedule: LrSchedule::new(cfg.schedule())?,
            epoch: 0,
            best_val_loss: f64::INFINITY,
            best_epoch: 0,
            epochs_since_improvement: 0,
        })
    }

    /// Restores a state written by [`train`].
    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = load_checkpoint(path)?;
        let (meta, optimizer) = ckpt
            .train
            .ok_or_else(|| Error::Checkpoint(format!("{} holds no training state", path.display())))?;
        Ok(TrainState {
            model: ckpt.model,
            optimizer,
            schedule: meta.schedule,
            epoch: meta.epoch,
            best_val_loss: meta.best_val_loss,
            best_epoch: meta.best_epoch,
            epochs_since_improvement: meta.epochs_since_improvement,
        })
    }

    fn meta(&self, cfg: &TrainConfig) -> TrainMeta {
        TrainMeta {
            epoch: self.epoch,
            best_val_loss: self.best_val_loss,
            best_epoch: self.best_epoch,
            epochs_since_improvement: self.epochs_since_improvement,
            schedule: self.schedule,
            adam: self.optimizer.config,
            adam_step: self.optimizer.step,
            config: cfg.clone(),
        }
    }

    pub fn save(&self, path: &Path, cfg: &TrainConfig) -> Result<()> {
        save_checkpoint(path, &self.model, Some((&self.meta(cfg), &self.optimizer)))
    }

    fn finished(&self, cfg: &TrainConfig) -> bool {
        self.epoch >= cfg.epochs_max || self.epochs_since_improvement >= cfg.early_stop_patience
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Records of the epochs run by this call.
    pub records: Vec<EpochRecord>,
    /// Best model seen during this call, if validation improved at all.
    pub best_model: Option<Model<f32>>,
    pub stopped_early: bool,
}

fn check_labels(seqs: &[SkeletonSequence], classes: usize, what: &str) -> Result<Vec<usize>> {
    if seqs.is_empty() {
        return Err(Error::Config(format!("{what} set is empty")));
    }
    seqs.iter()
        .map(|s| match s.label {
            Some(l) if l < classes => Ok(l),
            Some(l) => Err(Error::Data(format!("sequence {} has label {l} >= {classes} classes", s.id))),
            None => Err(Error::Data(format!("sequence {} is unlabeled", s.id))),
        })
        .collect()
}

/// Deterministic evaluation-mode inputs.
pub fn prepare_eval_inputs(model: &Model<f32>, seqs: &[SkeletonSequence]) -> Result<Vec<Array2<f32>>> {
    let hands = build_default_schema().hand_nodes();
    // the evaluation path draws no random numbers
    let mut rng = crate::rng::seeded(0);
    seqs.iter()
        .map(|s| {
            let p = prepare_sequence(s, model.config.frames, None, &hands, &mut rng)?;
            model.prepare_input(&p)
        })
        .collect()
}

/// Top-1 / top-5 accuracy and mean loss of `model` on labeled sequences.
pub fn evaluate(model: &Model<f32>, seqs: &[SkeletonSequence], smoothing: f64) -> Result<(Accuracy, f64)> {
    let targets = check_labels(seqs, model.config.num_classes, "evaluation")?;
    let inputs = prepare_eval_inputs(model, seqs)?;
    let logits = predict(model, &inputs)?;
    let loss = batch_loss(model, &Batch::new(&inputs, &targets), smoothing)?;
    Ok((accuracy(&logits, &targets), f64::from(loss)))
}

fn run_epoch(state: &mut TrainState, train_set: &[SkeletonSequence], targets: &[usize], cfg: &TrainConfig, hands: &[usize]) -> Result<f64> {
    let epoch = state.epoch + 1;
    let mut rng = crate::rng::stream(cfg.seed, epoch as u64);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut rng);
    let lr = state.schedule.lr();
    let frames = state.model.config.frames;
    let mut total = 0.0;
    for chunk in order.chunks(cfg.batch_size) {
        let mut inputs = Vec::with_capacity(chunk.len());
        let mut gammas: Vec<Gammas<f32>> = Vec::with_capacity(chunk.len());
        for &i in chunk {
            let seq = prepare_sequence(&train_set[i], frames, cfg.augment.as_ref(), hands, &mut rng)?;
            inputs.push(state.model.prepare_input(&seq)?);
            gammas.push(state.model.draw_gammas(&mut rng));
        }
        let batch_targets: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
        let batch = Batch {
            inputs: &inputs,
            targets: &batch_targets,
            gammas: &gammas,
        };
        let (loss, grads) = batch_loss_and_grad(&state.model, &batch, cfg.label_smoothing)?;
        state.optimizer.step(&mut state.model.params, &grads, lr)?;
        total += f64::from(loss) * chunk.len() as f64;
    }
    Ok(total / train_set.len() as f64)
}

/// Trains until `epochs_max` or early stopping. With `out_dir` set, writes
/// the metrics log, the best model and the resumable training state there.
pub fn train(
    state: &mut TrainState,
    train_set: &[SkeletonSequence],
    val_set: &[SkeletonSequence],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let classes = state.model.config.num_classes;
    let train_targets = check_labels(train_set, classes, "training")?;
    let val_targets = check_labels(val_set, classes, "validation")?;
    let hands = build_default_schema().hand_nodes();
    let val_inputs = prepare_eval_inputs(&state.model, val_set)?;

    let mut records = Vec::new();
    let mut best_model = None;
    while !state.finished(cfg) {
        let lr = state.schedule.lr();
        let train_loss = run_epoch(state, train_set, &train_targets, cfg, &hands)?;
        state.epoch += 1;
        let val_loss = f64::from(batch_loss(&state.model, &Batch::new(&val_inputs, &val_targets), cfg.label_smoothing)?);
        let acc = accuracy(&predict(&state.model, &val_inputs)?, &val_targets);
        let improved = val_loss < state.best_val_loss;
        if improved {
            state.best_val_loss = val_loss;
            state.best_epoch = state.epoch;
            state.epochs_since_improvement = 0;
            best_model = Some(state.model.clone());
        } else {
            state.epochs_since_improvement += 1;
        }
        state.schedule.observe(val_loss);
        let record = EpochRecord {
            epoch: state.epoch,
            train_loss,
            val_loss,
            lr,
            top1: acc.top1,
            top5: acc.top5,
            schedule: cfg.scheduler.name().into(),
            schedule_position: state.schedule.position,
        };
        log::info!(
            "epoch {} train_loss {:.5} val_loss {:.5} lr {:.3e} top1 {:.4} top5 {:.4}",
            record.epoch,
            record.train_loss,
            record.val_loss,
            record.lr,
            record.top1,
            record.top5
        );
        if let Some(dir) = out_dir {
            if improved {
                save_checkpoint(&dir.join(BEST_CHECKPOINT), &state.model, None)?;
            }
            state.save(&dir.join(STATE_CHECKPOINT), cfg)?;
            append_jsonl(&dir.join(METRICS_LOG), &record)?;
        }
        records.push(record);
    }
    Ok(TrainOutcome {
        records,
        best_model,
        stopped_early: state.epochs_since_improvement >= cfg.early_stop_patience,
    })
}

/// Replaces the classifier of a trained model with a fresh head for
/// `num_classes` and trains the whole network on the new task.
pub fn finetune(
    source: &Model<f32>,
    num_classes: usize,
    train_set: &[SkeletonSequence],
    val_set: &[SkeletonSequence],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<(TrainState, TrainOutcome)> {
    let mut config = source.config.clone();
    config.num_classes = num_classes;
    let mut rng = crate::rng::keyed(cfg.seed, "finetune-classifier");
    let params = source.params.with_new_classifier(num_classes, &mut rng);
    let model = Model::from_parts(config, source.fourier.clone(), params)?;
    let mut state = TrainState::new(model, cfg)?;
    let outcome = train(&mut state, train_set, val_set, cfg, out_dir)?;
    Ok((state, outcome))
}
