//! Iterative on-policy training.
//!
//! Each iteration `i` collects a fresh dataset by running the closed loop on
//! randomised trajectories. At every gated control step a uniform `r` is
//! drawn and compared with the switching threshold `s(i) = 1 - 2i/I`: when
//! `r < s` the controller is fed ground truth, otherwise the current model's
//! estimate. Whatever the controller used, the stored sample is always the
//! observation window paired with the true `[d, v_T]` at the window's last
//! step. The model is then fit to that dataset with minibatch Adam.
//!
//! Parallel work (episodes, minibatch chunks) is always split and merged in a
//! fixed order so results do not depend on the worker count.

use std::f64::consts::PI;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::closed_loop::{ClosedLoop, LoopSettings};
use crate::config::RunConfig;
use crate::dynamics::{NonholonomicTarget, Trajectory};
use crate::error::{Error, Result};
use crate::evaluation::{linspace, CIRCLE_OMEGA_GRID, CV_SPEED_GRID};
use crate::geometry::Vec2;
use crate::neural::{clip_global_norm, mse_loss, Adam, BackwardScratch, LstmModel, Trace};
use crate::rng::{derive, Purpose, SimRng};

/// Samples per gradient chunk. Fixed so the reduction tree never changes.
const GRAD_CHUNK: usize = 8;
/// Give up on an iteration after this many consecutive divergent episodes.
const MAX_CONSECUTIVE_DIVERGENCES: usize = 200;

/// Threshold on `r ~ U[0,1)` below which ground truth drives the controller.
pub fn switching_threshold(i: usize, total: usize) -> f64 {
    -(2.0 / total as f64) * i as f64 + 1.0
}

/// Which estimate feeds the controller at one decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    GroundTruth,
    Model,
}

/// One draw of the scheduled-sampling coin.
pub fn choose_source(threshold: f64, rng: &mut SimRng) -> Source {
    let r: f64 = rng.random();
    if r < threshold {
        Source::GroundTruth
    } else {
        Source::Model
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRef {
    episode: u32,
    /// Index of the window's newest observation within the episode.
    end: u32,
    /// True `[d_x, d_y, vT_x, vT_y]` at `end`.
    pub target: [f64; 4],
}

/// Encoded observation sequences plus the samples cut from them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub window_len: usize,
    episodes: Vec<Vec<[f64; 4]>>,
    samples: Vec<SampleRef>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Encoded input window of sample `i`, oldest first.
    pub fn window(&self, i: usize) -> &[[f64; 4]] {
        let s = &self.samples[i];
        let end = s.end as usize + 1;
        &self.episodes[s.episode as usize][end - self.window_len..end]
    }

    pub fn target(&self, i: usize) -> [f64; 4] {
        self.samples[i].target
    }

    /// Build a dataset directly from `(window, target)` pairs.
    pub fn from_pairs(window_len: usize, pairs: impl IntoIterator<Item = (Vec<[f64; 4]>, [f64; 4])>) -> Result<Self> {
        let mut d = Dataset {
            window_len,
            ..Default::default()
        };
        for (w, target) in pairs {
            if w.len() != window_len {
                return Err(Error::WrongWindowLength {
                    expected: window_len,
                    got: w.len(),
                });
            }
            d.samples.push(SampleRef {
                episode: d.episodes.len() as u32,
                end: (window_len - 1) as u32,
                target,
            });
            d.episodes.push(w);
        }
        Ok(d)
    }

    fn flat_window(&self, i: usize, out: &mut Vec<f64>) {
        out.clear();
        for x in self.window(i) {
            out.extend_from_slice(x);
        }
    }
}

/// Trajectory family drawn for a training episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    ConstantVelocity { v: f64 },
    Circle { r: f64, omega: f64 },
    Nonholonomic,
}

/// Uniform draw from `[lo, hi]` avoiding `±exclusion·spacing` around every grid point.
fn draw_off_grid(rng: &mut SimRng, lo: f64, hi: f64, grid: &[f64], exclusion: f64) -> f64 {
    let spacing = if grid.len() > 1 { grid[1] - grid[0] } else { 1.0 };
    let half = exclusion * spacing;
    loop {
        let v = if lo < hi { rng.random_range(lo..=hi) } else { lo };
        if half == 0.0 || grid.iter().all(|g| (v - g).abs() > half) || lo >= hi {
            return v;
        }
    }
}

fn draw_family(cfg: &RunConfig, rng: &mut SimRng) -> Family {
    let t = &cfg.training;
    let total = t.mix_constant_velocity + t.mix_circle + t.mix_nonholonomic;
    let pick = rng.random_range(0.0..total);
    if pick < t.mix_constant_velocity {
        let grid = linspace(CV_SPEED_GRID.0, CV_SPEED_GRID.1, CV_SPEED_GRID.2);
        Family::ConstantVelocity {
            v: draw_off_grid(rng, t.cv_speed_min, t.cv_speed_max, &grid, t.grid_exclusion),
        }
    } else if pick < t.mix_constant_velocity + t.mix_circle {
        let grid = linspace(CIRCLE_OMEGA_GRID.0, CIRCLE_OMEGA_GRID.1, CIRCLE_OMEGA_GRID.2);
        Family::Circle {
            r: t.circle_radius,
            omega: draw_off_grid(rng, t.circle_omega_min, t.circle_omega_max, &grid, t.grid_exclusion),
        }
    } else {
        Family::Nonholonomic
    }
}

pub fn loop_settings(cfg: &RunConfig) -> LoopSettings {
    LoopSettings {
        gains: cfg.gains(),
        dt: cfg.dt(),
        substeps: cfg.simulation.agent_substeps,
        noise: cfg.noise_model(),
        abort_radius: cfg.simulation.abort_radius,
        max_speed: cfg.controller.max_speed,
        window_len: cfg.model_window(),
    }
}

struct Episode {
    features: Vec<[f64; 4]>,
    samples: Vec<(u32, [f64; 4])>,
    truth_decisions: usize,
    model_decisions: usize,
    control_error_sum: f64,
}

/// Simulate one training episode; `Ok(None)` if it diverged.
fn run_episode(cfg: &RunConfig, model: &LstmModel, iteration: usize, episode: usize) -> Result<Option<Episode>> {
    let seed = cfg.run.seed;
    let (i, e) = (iteration as u64, episode as u64);
    let mut setup = derive(seed, Purpose::TrainEpisode, i, e);
    let mut decisions = derive(seed, Purpose::TrainDecision, i, e);
    let noise_rng = derive(seed, Purpose::TrainNoise, i, e);
    let dt = cfg.dt();
    let start = cfg.target_start();

    let trajectory = match draw_family(cfg, &mut setup) {
        Family::ConstantVelocity { v } => Trajectory::constant_velocity(start, v, dt),
        Family::Circle { r, omega } => Trajectory::circle(r, omega, dt),
        Family::Nonholonomic => {
            let mut target_rng = SimRng::from_rng(&mut setup);
            let t = NonholonomicTarget::random_start(start, cfg.bounds(), cfg.nonholonomic.resample_period, &mut target_rng);
            Trajectory::nonholonomic(t, dt, target_rng)
        }
    };
    let range = setup.random_range(cfg.training.agent_range_min..=cfg.training.agent_range_max);
    let angle = setup.random_range(-PI..PI);
    let agent_start = trajectory.position() + Vec2::new(range, 0.0).rotated(angle);

    let threshold = switching_threshold(iteration, cfg.training.iterations);
    let mut lp = ClosedLoop::new(loop_settings(cfg), trajectory, agent_start, noise_rng);
    let norm = model.normalization;
    let raw = model.raw_bearing;
    let mut ep = Episode {
        features: Vec::with_capacity(cfg.training.episode_steps),
        samples: Vec::new(),
        truth_decisions: 0,
        model_decisions: 0,
        control_error_sum: 0.0,
    };
    for _ in 0..cfg.training.episode_steps {
        let mut truth = None;
        let rec = match lp.step(|ctx| {
            truth = Some(ctx.truth);
            match choose_source(threshold, &mut decisions) {
                Source::GroundTruth => {
                    ep.truth_decisions += 1;
                    Ok(ctx.truth)
                }
                Source::Model => {
                    ep.model_decisions += 1;
                    model.estimate(ctx.window)
                }
            }
        }) {
            Ok(r) => r,
            Err(Error::Diverged { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        ep.features.push(norm.encode_input(&rec.observation, raw));
        if let Some(t) = truth {
            ep.samples.push((rec.step as u32, t.to_array()));
            ep.control_error_sum += (rec.true_displacement().norm() - cfg.controller.d_star).abs();
        }
    }
    Ok(Some(ep))
}

/// Scheduled-sampling statistics of one collection pass.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CollectionStats {
    pub episodes: usize,
    pub diverged_episodes: usize,
    pub truth_decisions: usize,
    pub model_decisions: usize,
    /// Mean |‖d‖ - d*| over gated steps of the kept episodes.
    pub mean_control_error: f64,
}

impl CollectionStats {
    pub fn ground_truth_fraction(&self) -> f64 {
        let n = self.truth_decisions + self.model_decisions;
        if n == 0 {
            0.0
        } else {
            self.truth_decisions as f64 / n as f64
        }
    }
}

/// Collect `samples_per_iteration` samples for iteration `iteration`.
pub fn collect_iteration_dataset(cfg: &RunConfig, model: &LstmModel, iteration: usize) -> Result<(Dataset, CollectionStats)> {
    let quota = cfg.training.samples_per_iteration;
    let wave = cfg.training.episode_wave;
    let mut data = Dataset {
        window_len: cfg.model_window(),
        ..Default::default()
    };
    let mut stats = CollectionStats::default();
    let mut err_sum = 0.0;
    let mut err_n = 0usize;
    let mut next_episode = 0usize;
    let mut consecutive_divergent = 0usize;

    while data.len() < quota {
        let results: Vec<Result<Option<Episode>>> = (next_episode..next_episode + wave)
            .into_par_iter()
            .map(|e| run_episode(cfg, model, iteration, e))
            .collect();
        next_episode += wave;
        for res in results {
            if data.len() >= quota {
                break;
            }
            let Some(ep) = res? else {
                stats.diverged_episodes += 1;
                consecutive_divergent += 1;
                if consecutive_divergent >= MAX_CONSECUTIVE_DIVERGENCES {
                    return Err(Error::Diverged {
                        step: 0,
                        range: cfg.simulation.abort_radius,
                    });
                }
                continue;
            };
            consecutive_divergent = 0;
            stats.episodes += 1;
            stats.truth_decisions += ep.truth_decisions;
            stats.model_decisions += ep.model_decisions;
            err_sum += ep.control_error_sum;
            err_n += ep.samples.len();
            let idx = data.episodes.len() as u32;
            let room = quota - data.len();
            data.samples.extend(ep.samples.iter().take(room).map(|&(end, target)| SampleRef {
                episode: idx,
                end,
                target,
            }));
            data.episodes.push(ep.features);
        }
    }
    stats.mean_control_error = if err_n > 0 { err_sum / err_n as f64 } else { 0.0 };
    Ok((data, stats))
}

/// Per-epoch result of supervised training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Gradient of the mean batch loss over `batch`, reduced in fixed chunk order.
fn batch_gradient(model: &LstmModel, data: &Dataset, batch: &[usize]) -> Result<(f64, crate::neural::Gradients)> {
    let norm = model.normalization;
    let partials: Vec<Result<(f64, crate::neural::Gradients)>> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = model.params.zeros_like();
            let mut trace = Trace::default();
            let mut scratch = BackwardScratch::default();
            let mut x = Vec::new();
            let mut loss = 0.0;
            for &i in chunk {
                data.flat_window(i, &mut x);
                model.params.forward_trace(&x, &mut trace)?;
                let (l, dy) = mse_loss(trace.output(), &norm.encode_target(&data.target(i)));
                loss += l;
                model.params.backward(&x, &trace, &dy, &mut g, &mut scratch)?;
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = model.params.zeros_like();
    let mut loss = 0.0;
    for p in partials {
        let (l, g) = p?;
        loss += l;
        total.add_assign(&g);
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

/// Fit `model` to `data` for the configured number of epochs.
pub fn train_iteration(
    model: &mut LstmModel,
    data: &Dataset,
    cfg: &RunConfig,
    optimizer: &mut Adam,
    iteration: usize,
) -> Result<Vec<EpochReport>> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("cannot train on an empty dataset".into()));
    }
    if data.window_len != model.window {
        return Err(Error::WrongWindowLength {
            expected: model.window,
            got: data.window_len,
        });
    }
    let t = &cfg.training;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut reports = Vec::with_capacity(t.epochs);
    for epoch in 0..t.epochs {
        let mut rng = derive(cfg.run.seed, Purpose::TrainShuffle, iteration as u64, epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, batch) in order.chunks(t.batch_size).enumerate() {
            let (loss, mut grads) = batch_gradient(model, data, batch)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss {
                    iteration,
                    epoch,
                    batch: b,
                });
            }
            clip_global_norm(&mut grads, t.grad_clip);
            optimizer.step(&mut model.params, &grads)?;
            loss_sum += loss;
            batches += 1;
        }
        reports.push(EpochReport {
            epoch,
            mean_loss: loss_sum / batches as f64,
        });
    }
    Ok(reports)
}

/// Metrics of one outer training iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    pub threshold: f64,
    pub samples: usize,
    pub collection: CollectionStats,
    pub epochs: Vec<EpochReport>,
    pub wallclock_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: LstmModel,
    pub iterations: Vec<IterationReport>,
}

/// Untrained model for `cfg`.
pub fn initial_model(cfg: &RunConfig) -> LstmModel {
    let mut rng = derive(cfg.run.seed, Purpose::ModelInit, 0, 0);
    let mut m = LstmModel::new(cfg.model.hidden, cfg.model_window(), cfg.normalization(), &mut rng);
    m.raw_bearing = cfg.noise.raw_noisy_bearing;
    m
}

/// The full pipeline. `on_iteration` runs after every iteration with the
/// updated model (checkpointing, progress output); an error from it stops training.
pub fn run_training<F>(cfg: &RunConfig, mut on_iteration: F) -> Result<TrainingOutcome>
where
    F: FnMut(&IterationReport, &LstmModel) -> Result<()>,
{
    cfg.validate()?;
    let mut model = initial_model(cfg);
    let mut optimizer = Adam::for_params(&model.params, cfg.training.lr);
    let mut reports = Vec::with_capacity(cfg.training.iterations);
    for i in 0..cfg.training.iterations {
        let started = Instant::now();
        let (data, collection) = collect_iteration_dataset(cfg, &model, i)?;
        let epochs = train_iteration(&mut model, &data, cfg, &mut optimizer, i)?;
        let report = IterationReport {
            iteration: i,
            threshold: switching_threshold(i, cfg.training.iterations),
            samples: data.len(),
            collection,
            epochs,
            wallclock_seconds: started.elapsed().as_secs_f64(),
        };
        on_iteration(&report, &model)?;
        reports.push(report);
    }
    Ok(TrainingOutcome {
        model,
        iterations: reports,
    })
}

/// Rayon pool with `workers` threads (0 = one per core).
pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {workers} workers: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> RunConfig {
        let mut c = RunConfig::desk();
        c.model.hidden = 4;
        c.controller.window = 10;
        c.training.iterations = 2;
        c.training.samples_per_iteration = 300;
        c.training.episode_steps = 120;
        c.training.epochs = 1;
        c.training.batch_size = 16;
        c
    }

    #[test]
    fn threshold_endpoints() {
        assert_eq!(switching_threshold(0, 50), 1.0);
        assert_eq!(switching_threshold(25, 50), 0.0);
        assert_eq!(switching_threshold(50, 50), -1.0);
        assert_eq!(switching_threshold(1, 4), 0.5);
    }

    #[test]
    fn off_grid_draws_avoid_evaluation_points() {
        let mut rng = derive(1, Purpose::TrainEpisode, 0, 0);
        let grid = linspace(1.0, 15.0, 15);
        for _ in 0..2000 {
            let v = draw_off_grid(&mut rng, 1.0, 15.0, &grid, 0.05);
            assert!((1.0..=15.0).contains(&v));
            assert!(grid.iter().all(|g| (v - g).abs() > 0.05));
        }
    }

    #[test]
    fn first_iteration_uses_only_ground_truth() {
        let cfg = tiny_cfg();
        let model = initial_model(&cfg);
        let (data, stats) = collect_iteration_dataset(&cfg, &model, 0).unwrap();
        assert_eq!(data.len(), 300);
        assert_eq!(stats.model_decisions, 0);
        assert!(stats.truth_decisions > 0);
    }

    #[test]
    fn zero_epochs_leave_params_unchanged() {
        let mut cfg = tiny_cfg();
        cfg.training.epochs = 0;
        let mut model = initial_model(&cfg);
        let before = model.clone();
        let (data, _) = collect_iteration_dataset(&cfg, &model, 0).unwrap();
        let mut opt = Adam::for_params(&model.params, 1e-3);
        train_iteration(&mut model, &data, &cfg, &mut opt, 0).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn empty_dataset_rejected() {
        let cfg = tiny_cfg();
        let mut model = initial_model(&cfg);
        let mut opt = Adam::for_params(&model.params, 1e-3);
        let data = Dataset {
            window_len: model.window,
            ..Default::default()
        };
        assert!(train_iteration(&mut model, &data, &cfg, &mut opt, 0).is_err());
    }
}
