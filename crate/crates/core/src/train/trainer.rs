use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::TrainConfig;
use super::data::PreparedClip;
use super::optim::{clip_grad_norm, Adam, PlateauScheduler};
use crate::error::{Result, SeldError};
use crate::fsio::write_atomic;
use crate::labels::{decode_predictions, permutation_invariant_loss, DecodeConfig, EventLabel};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::model::{save_checkpoint, SeldModel};
use crate::nn::{apply_bn_updates, seeded_rng, Forward, Mode, Rng, BN_MOMENTUM};
use crate::tensor::{Tape, Tensor};

/// Concatenates equally shaped tensors along a new leading axis.
pub fn stack(items: &[&Tensor]) -> Result<Tensor> {
    let first = items
        .first()
        .ok_or_else(|| SeldError::InvalidArgument("cannot stack zero tensors".into()))?;
    let mut shape = vec![items.len()];
    shape.extend_from_slice(first.shape());
    let mut data = Vec::with_capacity(first.numel() * items.len());
    for t in items {
        if t.shape() != first.shape() {
            return Err(SeldError::Shape {
                op: "stack",
                detail: format!("{:?} vs {:?}", t.shape(), first.shape()),
            });
        }
        data.extend_from_slice(t.data());
    }
    Tensor::new(shape, data)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// Model plus optimizer and schedule state.
pub struct Trainer {
    pub model: SeldModel,
    pub cfg: TrainConfig,
    pub scheduler: PlateauScheduler,
    opt: Adam,
    rng: Rng,
}

impl Trainer {
    pub fn new(model: SeldModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let opt = Adam::for_store(&model.params, cfg.weight_decay);
        let scheduler = PlateauScheduler::new(cfg.lr, cfg.plateau_factor, cfg.plateau_patience);
        // shuffling draws from its own stream so it does not shift with the
        // number of random draws made during initialization
        let rng = seeded_rng(cfg.seed ^ 0x5eed_5eed);
        Ok(Self {
            model,
            cfg,
            scheduler,
            opt,
            rng,
        })
    }

    pub fn lr(&self) -> f64 {
        self.scheduler.lr
    }

    pub fn steps(&self) -> u64 {
        self.opt.steps()
    }

    /// Training-mode loss of a batch without updating anything.
    pub fn batch_loss(&self, features: &Tensor, target: &Tensor) -> Result<f64> {
        let mut tape = Tape::new();
        let mut fw = Forward::new(&mut tape, &self.model.params, Mode::Train, false);
        let x = fw.tape().constant(features.clone());
        let y = self.model.net.forward(&mut fw, x)?;
        let t = fw.tape().constant(target.clone());
        let loss = permutation_invariant_loss(fw.tape(), y, t)?;
        Ok(tape.value(loss).data()[0])
    }

    /// One optimizer step on `[B, 7, T, M]` features and
    /// `[B, T / ds, tracks, classes, 3]` targets.
    pub fn train_step(&mut self, features: &Tensor, target: &Tensor) -> Result<StepStats> {
        let mut tape = Tape::new();
        let mut fw = Forward::new(&mut tape, &self.model.params, Mode::Train, true);
        let x = fw.tape().constant(features.clone());
        let y = self.model.net.forward(&mut fw, x)?;
        let t = fw.tape().constant(target.clone());
        let loss = permutation_invariant_loss(fw.tape(), y, t)?;
        let state = fw.finish();
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(SeldError::NonFinite(format!("loss is {value} at step {}", self.steps() + 1)));
        }
        tape.backward(loss)?;
        let mut grads = state.grads(&tape);
        let grad_norm = clip_grad_norm(&mut grads, self.cfg.grad_clip);
        if !grad_norm.is_finite() {
            return Err(SeldError::NonFinite(format!("gradient norm is {grad_norm} at step {}", self.steps() + 1)));
        }
        let lr = self.lr();
        self.opt.step_store(&mut self.model.params, &grads, lr)?;
        apply_bn_updates(&mut self.model.params, &state.bn_updates, BN_MOMENTUM)?;
        Ok(StepStats { loss: value, grad_norm })
    }

    /// One pass over the training segments (doubled with swapped copies
    /// when `acs` is set) in a seeded order. Returns the sample-weighted
    /// mean loss and the number of steps taken.
    pub fn train_epoch(&mut self, clips: &[PreparedClip]) -> Result<(f64, usize)> {
        let mut items: Vec<(usize, usize, bool)> = Vec::new();
        for (c, clip) in clips.iter().enumerate() {
            for s in 0..clip.segments.len() {
                items.push((c, s, false));
                if self.cfg.acs {
                    items.push((c, s, true));
                }
            }
        }
        if items.is_empty() {
            return Err(SeldError::InvalidArgument("no training segments".into()));
        }
        items.shuffle(&mut self.rng);
        let (mut total, mut steps) = (0.0, 0);
        for batch in items.chunks(self.cfg.batch_size) {
            let swapped: Vec<Tensor>;
            let (feats, targets): (Vec<&Tensor>, Vec<&Tensor>) = if batch.iter().any(|b| b.2) {
                swapped = batch
                    .iter()
                    .map(|&(c, s, sw)| {
                        let seg = &clips[c].segments[s];
                        if sw {
                            seg.features_swapped()
                        } else {
                            seg.features.clone()
                        }
                    })
                    .collect();
                (
                    swapped.iter().collect(),
                    batch
                        .iter()
                        .map(|&(c, s, sw)| {
                            let seg = &clips[c].segments[s];
                            if sw {
                                &seg.target_swapped
                            } else {
                                &seg.target
                            }
                        })
                        .collect(),
                )
            } else {
                batch
                    .iter()
                    .map(|&(c, s, _)| (&clips[c].segments[s].features, &clips[c].segments[s].target))
                    .unzip()
            };
            let stats = self.train_step(&stack(&feats)?, &stack(&targets)?)?;
            total += stats.loss * batch.len() as f64;
            steps += 1;
        }
        Ok((total / items.len() as f64, steps))
    }
}

/// Events predicted for one clip, with frames counted from the clip start.
pub fn predict_clip(model: &SeldModel, clip: &PreparedClip, decode: &DecodeConfig) -> Result<Vec<EventLabel>> {
    let feats: Vec<&Tensor> = clip.segments.iter().map(|s| &s.features).collect();
    let out = model.infer(&stack(&feats)?)?;
    let per = out.numel() / clip.segments.len();
    let seg_shape = out.shape()[1..].to_vec();
    let accdoa = model.cfg().accdoa();
    let mut events = Vec::new();
    for (i, chunk) in out.data().chunks(per).enumerate() {
        let seg = Tensor::new(seg_shape.clone(), chunk.to_vec())?;
        for mut e in decode_predictions(&seg, &accdoa, decode)? {
            e.frame += i * clip.segment_label_frames;
            if e.frame < clip.label_frames {
                events.push(e);
            }
        }
    }
    Ok(events)
}

/// Scores the model on `clips` against their labels.
pub fn evaluate(model: &SeldModel, clips: &[PreparedClip], decode: &DecodeConfig) -> Result<MetricsReport> {
    let pairs: Vec<(Vec<EventLabel>, Vec<EventLabel>)> = clips
        .par_iter()
        .map(|c| Ok((predict_clip(model, c, decode)?, c.labels.clone())))
        .collect::<Result<_>>()?;
    Ok(compute_metrics(&pairs))
}

/// Index of the highest F-score, the earliest on ties; NaN never wins.
pub fn select_best(f20s: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in f20s.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| v > f20s[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f20: f64,
    pub val_doae: f64,
    pub val_rde: f64,
    /// Rate used during the epoch.
    pub lr: f64,
    pub steps: usize,
}

pub fn log_csv(records: &[EpochRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "val_f20", "val_doae", "val_rde", "lr"])?;
    for r in records {
        w.write_record([
            r.epoch.to_string(),
            format!("{:.9}", r.train_loss),
            format!("{:.6}", r.val_f20),
            format!("{:.6}", r.val_doae),
            format!("{:.6}", r.val_rde),
            format!("{:e}", r.lr),
        ])?;
    }
    w.into_inner().map_err(|e| SeldError::Io(e.into_error()))
}

#[derive(Clone, Debug, Default)]
pub struct LoopOptions {
    /// Where `log.csv`, `best.ckpt` and `last.ckpt` go; nothing is written
    /// when unset.
    pub out_dir: Option<PathBuf>,
    pub decode: DecodeConfig,
}

pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    /// Zero-based index into `log` of the selected epoch.
    pub best_epoch: usize,
    pub best_model: SeldModel,
}

/// Runs `trainer.cfg.epochs` epochs, validating after each one. With no
/// validation clips the training clips are scored instead.
pub fn train_loop(
    trainer: &mut Trainer,
    train: &[PreparedClip],
    val: &[PreparedClip],
    opts: &LoopOptions,
) -> Result<TrainOutcome> {
    let scored = if val.is_empty() {
        log::warn!("no validation clips; selecting on training clips");
        train
    } else {
        val
    };
    let mut log: Vec<EpochRecord> = Vec::new();
    let mut best: Option<(usize, SeldModel)> = None;
    for epoch in 1..=trainer.cfg.epochs {
        let lr = trainer.lr();
        let (train_loss, steps) = trainer.train_epoch(train)?;
        let report = evaluate(&trainer.model, scored, &opts.decode)?;
        trainer.scheduler.step(report.f20);
        log::info!(
            "epoch {epoch}: loss {train_loss:.6} {} lr {lr:e}",
            report.summary_line()
        );
        log.push(EpochRecord {
            epoch,
            train_loss,
            val_f20: report.f20,
            val_doae: report.doae_deg,
            val_rde: report.rde,
            lr,
            steps,
        });
        let f20s: Vec<f64> = log.iter().map(|r| r.val_f20).collect();
        let improved = select_best(&f20s) == Some(epoch - 1);
        if improved {
            best = Some((epoch - 1, trainer.model.clone()));
        }
        if let Some(dir) = &opts.out_dir {
            save_checkpoint(&dir.join("last.ckpt"), &trainer.model)?;
            if improved {
                save_checkpoint(&dir.join("best.ckpt"), &trainer.model)?;
            }
            write_atomic(&dir.join("log.csv"), &log_csv(&log)?)?;
        }
    }
    let (best_epoch, best_model) = best.unwrap_or_else(|| (0, trainer.model.clone()));
    Ok(TrainOutcome {
        log,
        best_epoch,
        best_model,
    })
}
