use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::LossBreakdown;
use super::model::{Architecture, Model};
use super::predictor::{value_targets, LearnedPredictor};
use crate::agent::World;
use crate::error::{Error, Result};
use crate::labels::{memory_update_and_batch, rollout_collect, ReplayMemory, TrainingSample};
use crate::planning::DEFAULT_BETA;
use crate::sensor::Pose;

/// Samples evaluated per parallel work unit; the reduction order is fixed.
const CHUNK: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Outer collect-and-train iterations.
    pub iterations: u32,
    /// Iterations that use the curriculum filter.
    pub curriculum_iters: u32,
    pub trajectories_first: usize,
    pub trajectories_later: usize,
    pub rollout_length: usize,
    /// Epoch cap per iteration.
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Minibatches whose gradients are summed before one update.
    pub accumulation: usize,
    /// Epochs without holdout improvement before the learning rate decays.
    pub plateau_patience: usize,
    pub lr_decay: f64,
    /// Epochs without holdout improvement before an iteration stops early.
    pub stop_patience: usize,
    pub holdout_size: usize,
    pub beta: f64,
    /// Mix older memory into each training set.
    pub replay: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            curriculum_iters: 1,
            trajectories_first: 2,
            trajectories_later: 1,
            rollout_length: 60,
            epochs: 10,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 32,
            accumulation: 4,
            plateau_patience: 2,
            lr_decay: 0.1,
            stop_patience: 4,
            holdout_size: 200,
            beta: DEFAULT_BETA,
            replay: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        if self.iterations == 0 || self.rollout_length == 0 || self.trajectories_first == 0 {
            return bad("iterations, rollout length and first-iteration trajectories must be positive");
        }
        if self.batch_size == 0 || self.accumulation == 0 {
            return bad("batch size and accumulation must be positive");
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.beta > 0.0) {
            return bad("learning rate and temperature must be positive, momentum in [0, 1)");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("learning-rate decay must be in (0, 1]");
        }
        Ok(())
    }
}

/// One line of the training log. Iteration 0 is the untrained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub iteration: u32,
    pub collected: usize,
    pub train_set: usize,
    pub memory: usize,
    pub epochs: usize,
    pub holdout_loss: f64,
    pub holdout_mse: f64,
    pub holdout_bce: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub learning_rate: f64,
}

/// Hooks into the training loop.
pub trait TrainObserver {
    fn on_log(&mut self, _entry: &TrainLogEntry) {}
    /// The training set assembled for an iteration.
    fn on_batch(&mut self, _iteration: u32, _set: &[Arc<TrainingSample>]) {}
}

impl TrainObserver for () {}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<TrainLogEntry>,
    pub memory: ReplayMemory,
}

/// Mean loss over `samples`, and the summed gradient when requested.
/// Per-chunk results are reduced in a fixed order, so the result does not
/// depend on the number of threads.
pub fn batch_loss(
    model: &Model,
    samples: &[Arc<TrainingSample>],
    with_grad: bool,
) -> Result<(LossBreakdown, Option<Vec<f64>>)> {
    if samples.is_empty() {
        return Err(Error::EmptySeries);
    }
    let arch = model.arch;
    let parts = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = with_grad.then(|| vec![0.0; model.param_count()]);
            let mut sum = LossBreakdown::default();
            for s in chunk {
                let targets = value_targets(s, arch.width, arch.height, model.gain_scale);
                let l = model.loss(&s.embedding.to_input(), &targets, s.obstacle_gt.data(), grad.as_deref_mut())?;
                sum.total += l.total;
                sum.mse += l.mse;
                sum.bce += l.bce;
                sum.labels += l.labels;
            }
            Ok((sum, grad))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = samples.len() as f64;
    let mut mean = LossBreakdown::default();
    let mut total_grad = with_grad.then(|| vec![0.0; model.param_count()]);
    for (sum, grad) in parts {
        mean.total += sum.total / n;
        mean.mse += sum.mse / n;
        mean.bce += sum.bce / n;
        mean.labels += sum.labels;
        if let (Some(acc), Some(g)) = (total_grad.as_mut(), grad) {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
    }
    if !mean.total.is_finite() {
        return Err(Error::Diverged(format!("non-finite loss {}", mean.total)));
    }
    Ok((mean, total_grad))
}

/// Momentum SGD over the model parameters.
struct Sgd {
    velocity: Vec<f64>,
    lr: f64,
    momentum: f64,
}

impl Sgd {
    fn step(&mut self, params: &mut [f64], grad: &[f64], scale: f64) {
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.momentum * *v + g * scale;
            *p -= self.lr * *v;
        }
    }
}

fn job_rng(seed: u64, iteration: u32, scene: usize, trajectory: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 40) | ((scene as u64) << 16) | trajectory as u64);
    rng
}

fn collect(worlds: &[World], model: &Model, cfg: &TrainConfig, iteration: u32) -> Result<Vec<Arc<TrainingSample>>> {
    let per_scene = if iteration == 1 { cfg.trajectories_first } else { cfg.trajectories_later };
    let predictor = Arc::new(LearnedPredictor::new(Arc::new(model.clone())));
    let jobs: Vec<(usize, usize)> = (0..worlds.len()).flat_map(|s| (0..per_scene).map(move |t| (s, t))).collect();
    let rollouts = jobs
        .par_iter()
        .map(|&(s, t)| {
            let world = &worlds[s];
            let mut rng = job_rng(cfg.seed, iteration, s, t);
            let cells = world.scene().navigable_cells();
            let start = Pose::new(cells[rng.random_range(0..cells.len())], rng.random_range(0..8));
            rollout_collect(world, predictor.clone(), start, cfg.rollout_length, cfg.beta, &mut rng).map(|r| r.samples)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rollouts.into_iter().flatten().map(Arc::new).collect())
}

fn log_entry(model: &Model, holdout: &LossBreakdown, lr: f64) -> TrainLogEntry {
    let (s1, s2) = model.log_sigmas();
    TrainLogEntry {
        iteration: 0,
        collected: 0,
        train_set: 0,
        memory: 0,
        epochs: 0,
        holdout_loss: holdout.total,
        holdout_mse: holdout.mse,
        holdout_bce: holdout.bce,
        sigma1: s1.exp(),
        sigma2: s2.exp(),
        learning_rate: lr,
    }
}

/// Collect-and-train loop: each iteration gathers rollouts with the current
/// model, assembles a curriculum-filtered, replay-mixed training set and
/// runs up to `epochs` epochs of momentum SGD. Each iteration keeps the
/// parameters with the lowest holdout loss it has seen.
pub fn train(
    worlds: &[World],
    arch: Architecture,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if worlds.is_empty() {
        return Err(Error::InvalidParams("training needs at least one scene".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::new(arch, &mut rng);
    let mut memory = ReplayMemory::new();
    let mut opt = Sgd { velocity: vec![0.0; model.param_count()], lr: cfg.learning_rate, momentum: cfg.momentum };
    let mut log = Vec::new();
    let mut best_seen = f64::INFINITY;
    let mut stale = 0;

    for iteration in 1..=cfg.iterations {
        let mut fresh = collect(worlds, &model, cfg, iteration)?;
        let collected = fresh.len();
        if iteration == 1 {
            let max_gain = fresh.iter().flat_map(|s| &s.value_labels).map(|l| l.gain).fold(0.0, f64::max);
            model.gain_scale = if max_gain > 0.0 { max_gain } else { 1.0 };
            memory.split_holdout(&mut fresh, cfg.holdout_size, &mut rng);
            if memory.holdout().is_empty() {
                return Err(Error::InvalidParams("first collection produced no samples".into()));
            }
            let (initial, _) = batch_loss(&model, memory.holdout(), false)?;
            let entry = log_entry(&model, &initial, opt.lr);
            observer.on_log(&entry);
            log.push(entry);
            best_seen = initial.total;
        }
        let before = memory.len();
        let mut set = memory_update_and_batch(&mut memory, fresh, iteration, cfg.curriculum_iters, &mut rng);
        if !cfg.replay {
            // The fresh survivors come first.
            set.truncate(memory.len() - before);
        }
        observer.on_batch(iteration, &set);

        let mut best_loss = batch_loss(&model, memory.holdout(), false)?.0.total;
        let mut best_params = model.params.clone();
        let mut since_best = 0;
        let mut epochs = 0;
        for _ in 0..cfg.epochs {
            if set.is_empty() {
                break;
            }
            set.shuffle(&mut rng);
            epochs += 1;
            for group in set.chunks(cfg.batch_size * cfg.accumulation) {
                let mut grad = vec![0.0; model.param_count()];
                for mb in group.chunks(cfg.batch_size) {
                    let (_, g) = batch_loss(&model, mb, true)?;
                    for (a, b) in grad.iter_mut().zip(g.expect("gradient requested")) {
                        *a += b;
                    }
                }
                opt.step(&mut model.params, &grad, 1.0 / group.len() as f64);
            }
            let (held, _) = batch_loss(&model, memory.holdout(), false)?;
            if held.total < best_loss {
                best_loss = held.total;
                best_params.clone_from(&model.params);
                since_best = 0;
            } else {
                since_best += 1;
            }
            if held.total < best_seen - 1e-4 * best_seen.abs() {
                best_seen = held.total;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.plateau_patience {
                    opt.lr *= cfg.lr_decay;
                    stale = 0;
                }
            }
            if since_best >= cfg.stop_patience {
                break;
            }
        }
        model.params = best_params;
        let (held, _) = batch_loss(&model, memory.holdout(), false)?;
        let entry = TrainLogEntry {
            iteration,
            collected,
            train_set: set.len(),
            memory: memory.len(),
            epochs,
            ..log_entry(&model, &held, opt.lr)
        };
        observer.on_log(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { model, log, memory })
}
