//! Plain SGD with a two-stage learning rate and gradient accumulation over
//! groups of windows.
//!
//! Each window is its own graph, so a "batch" is a group of
//! `batch_windows` forward/backward passes whose gradients are averaged
//! before one optimizer step. Windows inside a group run in parallel; their
//! gradients are reduced in window order, so results do not depend on the
//! thread count.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::error::{Error, Result};
use crate::gaussian::{self, LossReduction};
use crate::graph::SpatioTemporalGraph;
use crate::model::{forward_raw, init_params, window_graph, ModelConfig, ModelParams, ParamVars};
use crate::tensor::Tape;
use crate::trajdata::{FeatureMode, Track, TrajectoryWindow};

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

/// Gradient-norm cap applied by default. Freshly initialized networks
/// occasionally emit log-σ near −10 on a few windows, and the first
/// unclipped step from such a batch overflows the likelihood.
pub const DEFAULT_CLIP_NORM: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_initial: f64,
    pub lr_after: f64,
    pub lr_switch_epoch: usize,
    pub batch_windows: usize,
    pub seed: u64,
    /// Rescale the averaged gradient to at most this norm; `None` disables.
    pub clip_norm: Option<f64>,
    /// Defaults to the mean over steps and pedestrians; summing over the 12
    /// steps makes the first SGD steps at lr 0.01 diverge.
    pub reduction: LossReduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 250,
            lr_initial: 0.01,
            lr_after: 0.002,
            lr_switch_epoch: 150,
            batch_windows: 128,
            seed: 0,
            clip_norm: Some(DEFAULT_CLIP_NORM),
            reduction: LossReduction::MeanOverAll,
        }
    }
}

impl TrainConfig {
    /// Default schedule compressed to `epochs`, keeping the switch at the
    /// same fraction (3/5) of the run.
    pub fn with_budget(epochs: usize, seed: u64) -> Self {
        let d = Self::default();
        Self {
            epochs,
            lr_switch_epoch: epochs * d.lr_switch_epoch / d.epochs,
            seed,
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lr_after > 0.0 && self.lr_after <= self.lr_initial && self.lr_initial.is_finite()) {
            return bad(format!(
                "learning rates must satisfy 0 < lr_after <= lr_initial (got {} and {})",
                self.lr_after, self.lr_initial
            ));
        }
        if self.lr_switch_epoch >= self.epochs {
            return bad(format!(
                "lr_switch_epoch ({}) must be below epochs ({})",
                self.lr_switch_epoch, self.epochs
            ));
        }
        if self.batch_windows < 1 {
            return bad("batch_windows must be at least 1".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip_norm must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

pub fn lr_schedule(cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::Contract(format!(
            "epoch {epoch} outside schedule of {} epochs",
            cfg.epochs
        )));
    }
    Ok(if epoch < cfg.lr_switch_epoch {
        cfg.lr_initial
    } else {
        cfg.lr_after
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// One-based epoch number.
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub wall_seconds: f64,
    pub steps: usize,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "mean_loss", "lr", "wall_seconds"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.mean_loss.to_string(),
                e.lr.to_string(),
                format!("{:.3}", e.wall_seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A window with its graph and regression target precomputed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub graph: SpatioTemporalGraph,
    pub target: Vec<Track>,
}

/// Target in the network's output space: displacements or positions.
pub fn training_target(window: &TrajectoryWindow, mode: FeatureMode) -> Vec<Track> {
    match mode {
        FeatureMode::Displacement => window.target_displacements(),
        FeatureMode::Absolute => window.pred.clone(),
    }
}

pub fn prepare(window: &TrajectoryWindow, config: &ModelConfig) -> Result<Prepared> {
    Ok(Prepared {
        graph: window_graph(window, config)?,
        target: training_target(window, config.feature_mode),
    })
}

/// Loss of one window and its gradient flattened in parameter order.
pub fn window_loss_and_grad(
    params: &ModelParams,
    config: &ModelConfig,
    window: &Prepared,
    reduction: LossReduction,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let vars = ParamVars::bind(&mut tape, params, true);
    let raw = forward_raw(&mut tape, &window.graph, &vars, config)?;
    let loss = gaussian::tape_nll(&mut tape, raw, &window.target, reduction)?;
    tape.backward(loss)?;
    let value = tape.value(loss).data()[0];
    let mut grad = Vec::with_capacity(params.scalar_count());
    for (_, &v) in vars.iter() {
        match tape.grad(v) {
            Some(g) => grad.extend_from_slice(g),
            None => grad.extend(std::iter::repeat(0.0).take(tape.value(v).numel())),
        }
    }
    Ok((value, grad))
}

/// Loss of one window without gradients.
pub fn window_loss(params: &ModelParams, config: &ModelConfig, window: &Prepared, reduction: LossReduction) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = ParamVars::bind(&mut tape, params, false);
    let raw = forward_raw(&mut tape, &window.graph, &vars, config)?;
    let loss = gaussian::tape_nll(&mut tape, raw, &window.target, reduction)?;
    Ok(tape.value(loss).data()[0])
}

/// `params -= lr * grad`, with `grad` flattened in parameter order.
pub fn sgd_step(params: &mut ModelParams, grad: &[f64], lr: f64) {
    let mut offset = 0;
    for (_, t) in params.iter_mut() {
        let n = t.numel();
        for (p, g) in t.data_mut().iter_mut().zip(&grad[offset..offset + n]) {
            *p -= lr * g;
        }
        offset += n;
    }
    debug_assert_eq!(offset, grad.len());
}

/// Extra knobs for [`train_with`].
#[derive(Debug, Clone, Default)]
pub struct TrainOptions<'a> {
    /// Windows scored after every epoch; enables `best.ckpt`.
    pub validation: Option<&'a [TrajectoryWindow]>,
    /// Directory receiving `last.ckpt` every epoch and `best.ckpt`.
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from this state; its epoch counter is the first epoch run.
    pub resume: Option<Checkpoint>,
    /// Stop after this many epochs of the schedule have completed, leaving
    /// the rest for a later resumed run.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: TrainLog,
}

pub fn train(model_cfg: &ModelConfig, train_cfg: &TrainConfig, windows: &[TrajectoryWindow]) -> Result<TrainOutcome> {
    train_with(model_cfg, train_cfg, windows, &TrainOptions::default())
}

pub fn train_with(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    windows: &[TrajectoryWindow],
    opts: &TrainOptions<'_>,
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::Contract("training needs at least one window".into()));
    }
    let prepared: Vec<Prepared> = windows
        .par_iter()
        .map(|w| prepare(w, model_cfg))
        .collect::<Result<_>>()?;
    let validation: Option<Vec<Prepared>> = opts
        .validation
        .map(|v| v.par_iter().map(|w| prepare(w, model_cfg)).collect::<Result<_>>())
        .transpose()?;

    let (mut params, first_epoch) = match &opts.resume {
        Some(ck) => {
            if ck.config != *model_cfg {
                return Err(Error::Config(format!(
                    "resume checkpoint has [{}], run requests [{}]",
                    ck.config, model_cfg
                )));
            }
            (ck.params.clone(), ck.epoch)
        }
        None => (init_params(model_cfg, train_cfg.seed), 0),
    };
    if first_epoch > train_cfg.epochs {
        return Err(Error::Config(format!(
            "resume checkpoint is at epoch {first_epoch}, beyond the {} configured",
            train_cfg.epochs
        )));
    }
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut log = TrainLog::default();
    let mut best_val = f64::INFINITY;
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let last_epoch = opts.stop_after.map_or(train_cfg.epochs, |s| s.min(train_cfg.epochs));
    for epoch in first_epoch..last_epoch {
        let started = Instant::now();
        let lr = lr_schedule(train_cfg, epoch)?;
        order.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut steps = 0;
        for group in order.chunks(train_cfg.batch_windows) {
            let results: Vec<(f64, Vec<f64>)> = group
                .par_iter()
                .map(|&i| {
                    let (loss, grad) = window_loss_and_grad(&params, model_cfg, &prepared[i], train_cfg.reduction)
                        .map_err(|e| non_finite(e, epoch, i))?;
                    if !loss.is_finite() {
                        return Err(non_finite(Error::Numeric(format!("loss {loss}")), epoch, i));
                    }
                    Ok((loss, grad))
                })
                .collect::<Result<_>>()?;
            let mut grad = vec![0.0; params.scalar_count()];
            for (loss, g) in &results {
                loss_sum += loss;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let k = results.len() as f64;
            grad.iter_mut().for_each(|g| *g /= k);
            if let Some(c) = train_cfg.clip_norm {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > c {
                    grad.iter_mut().for_each(|g| *g *= c / norm);
                }
            }
            sgd_step(&mut params, &grad, lr);
            steps += 1;
        }
        if !params.is_finite() {
            return Err(Error::Numeric(format!(
                "parameters became non-finite during epoch {}",
                epoch + 1
            )));
        }

        let val_loss = validation
            .as_ref()
            .map(|v| mean_loss(&params, model_cfg, v, train_cfg.reduction))
            .transpose()?;
        let entry = EpochLog {
            epoch: epoch + 1,
            mean_loss: loss_sum / prepared.len() as f64,
            lr,
            wall_seconds: started.elapsed().as_secs_f64(),
            steps,
            val_loss,
        };
        log::info!(
            "epoch {}/{} loss {:.4} lr {} {:.1}s{}",
            entry.epoch,
            train_cfg.epochs,
            entry.mean_loss,
            lr,
            entry.wall_seconds,
            val_loss.map(|v| format!(" val {v:.4}")).unwrap_or_default()
        );
        if let Some(dir) = &opts.checkpoint_dir {
            save_checkpoint(&params, model_cfg, epoch + 1, &dir.join(LAST_CHECKPOINT))?;
            if let Some(v) = val_loss {
                if v < best_val {
                    best_val = v;
                    save_checkpoint(&params, model_cfg, epoch + 1, &dir.join(BEST_CHECKPOINT))?;
                }
            }
        }
        log.epochs.push(entry);
    }
    Ok(TrainOutcome { params, log })
}

fn non_finite(e: Error, epoch: usize, window: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!(
            "non-finite loss in epoch {} at window {window}: {msg}",
            epoch + 1
        )),
        other => other,
    }
}

/// Mean loss over prepared windows, computed in parallel and summed in order.
pub fn mean_loss(params: &ModelParams, config: &ModelConfig, windows: &[Prepared], reduction: LossReduction) -> Result<f64> {
    let losses: Vec<f64> = windows
        .par_iter()
        .map(|w| window_loss(params, config, w, reduction))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

pub fn write_log(log: &TrainLog, path: &Path) -> Result<()> {
    log.write_csv(std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv_windows(count: usize) -> Vec<TrajectoryWindow> {
        (0..count)
            .map(|i| {
                let n = 1 + i % 3;
                let track = |p: usize, range: std::ops::Range<usize>| -> Track {
                    let v = [0.3 + 0.05 * p as f64, 0.1 * (i % 5) as f64 - 0.2];
                    // small deterministic jitter keeps the likelihood bounded
                    let jitter = |t: usize, c: usize| 0.02 * ((i * 31 + p * 17 + t * 7 + c * 3) as f64).sin();
                    range
                        .map(|t| [p as f64 * 2.0 + v[0] * t as f64 + jitter(t, 0), i as f64 * 0.1 + v[1] * t as f64 + jitter(t, 1)])
                        .collect()
                };
                TrajectoryWindow {
                    obs: (0..n).map(|p| track(p, 0..8)).collect(),
                    pred: (0..n).map(|p| track(p, 8..20)).collect(),
                    ped_ids: (0..n as i64).collect(),
                    start_frame: i as i64,
                }
            })
            .collect()
    }

    #[test]
    fn schedule_boundaries() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule(&cfg, 0).unwrap(), 0.01);
        assert_eq!(lr_schedule(&cfg, 149).unwrap(), 0.01);
        assert_eq!(lr_schedule(&cfg, 150).unwrap(), 0.002);
        assert_eq!(lr_schedule(&cfg, 249).unwrap(), 0.002);
        assert!(matches!(lr_schedule(&cfg, 250), Err(Error::Contract(_))));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { lr_after: 0.02, ..Default::default() },
            TrainConfig { lr_after: 0.0, ..Default::default() },
            TrainConfig { lr_switch_epoch: 250, ..Default::default() },
            TrainConfig { batch_windows: 0, ..Default::default() },
            TrainConfig { clip_norm: Some(-1.0), ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        for e in [1, 2, 30, 250] {
            assert!(TrainConfig::with_budget(e, 0).validate().is_ok());
        }
        assert_eq!(TrainConfig::with_budget(30, 0).lr_switch_epoch, 18);
    }

    #[test]
    fn oversized_batch_gives_one_step_per_epoch() {
        let cfg = TrainConfig {
            batch_windows: 1000,
            ..TrainConfig::with_budget(2, 1)
        };
        let out = train(&ModelConfig::default(), &cfg, &cv_windows(10)).unwrap();
        assert!(out.log.epochs.iter().all(|e| e.steps == 1));
        let cfg = TrainConfig {
            batch_windows: 4,
            ..cfg
        };
        let out = train(&ModelConfig::default(), &cfg, &cv_windows(10)).unwrap();
        assert!(out.log.epochs.iter().all(|e| e.steps == 3));
    }

    #[test]
    fn empty_window_list_is_rejected() {
        let err = train(&ModelConfig::default(), &TrainConfig::with_budget(1, 0), &[]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn smoke_training_lowers_loss() {
        let cfg = TrainConfig {
            batch_windows: 8,
            ..TrainConfig::with_budget(5, 3)
        };
        let out = train(&ModelConfig::default(), &cfg, &cv_windows(200)).unwrap();
        let e = &out.log.epochs;
        assert_eq!(e.len(), 5);
        assert!(e[4].mean_loss < e[0].mean_loss, "{:?}", e.iter().map(|e| e.mean_loss).collect::<Vec<_>>());
    }

    #[test]
    fn identical_seeds_identical_params() {
        let cfg = TrainConfig {
            batch_windows: 4,
            ..TrainConfig::with_budget(2, 9)
        };
        let w = cv_windows(12);
        let a = train(&ModelConfig::default(), &cfg, &w).unwrap();
        let b = train(&ModelConfig::default(), &cfg, &w).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let model = ModelConfig::default();
        let w = cv_windows(12);
        let cfg = TrainConfig {
            batch_windows: 4,
            ..TrainConfig::with_budget(4, 2)
        };
        let full = train(&model, &cfg, &w).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let opts = TrainOptions {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            stop_after: Some(2),
            ..Default::default()
        };
        let head = train_with(&model, &cfg, &w, &opts).unwrap();
        assert_eq!(head.log.epochs.len(), 2);
        let ck = crate::checkpoint::load_checkpoint(&dir.path().join(LAST_CHECKPOINT)).unwrap();
        assert_eq!(ck.epoch, 2);
        let rest = train_with(
            &model,
            &cfg,
            &w,
            &TrainOptions {
                resume: Some(ck),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(rest.log.epochs.first().unwrap().epoch, 3);
        assert_eq!(rest.params, full.params);
    }
}
