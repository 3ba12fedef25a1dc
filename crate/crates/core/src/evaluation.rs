//! Trials, error metrics and the experiment sweeps.
//!
//! Every trial starts with the target at the origin, the agent at `[15, 0]`
//! and a held initial target estimate of `[5, 0]` until the estimator window
//! fills. Errors are averaged over a trailing window of each trial (the last
//! 5 s by default; nonholonomic trials use the whole trial).

use std::io::Write;

use rand::SeedableRng;
use rayon::prelude::*;

use crate::closed_loop::ClosedLoop;
use crate::config::RunConfig;
use crate::controller::TargetEstimate;
use crate::dynamics::{NonholonomicTarget, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::neural::LstmModel;
use crate::rng::{derive, Purpose, SimRng};
use crate::training::loop_settings;

/// `(first, last, count)` of the constant-velocity evaluation speeds (m/s).
pub const CV_SPEED_GRID: (f64, f64, usize) = (1.0, 15.0, 15);
/// `(first, last, count)` of the circle evaluation angular rates (rad/s).
pub const CIRCLE_OMEGA_GRID: (f64, f64, usize) = (0.05, 0.4, 15);
pub const CIRCLE_RADIUS: f64 = 20.0;
pub const CV_STEPS: usize = 1000;
pub const CIRCLE_STEPS: usize = 750;
/// Trailing averaging window (s).
pub const AVERAGE_SECONDS: f64 = 5.0;
pub const FAST_CV_SPEED_GRID: (f64, f64, usize) = (1.0, 24.0, 15);
pub const FAST_CIRCLE_OMEGA_GRID: (f64, f64, usize) = (0.1, 1.2, 15);
pub const FAST_NONHOLONOMIC_SPEED_GRID: (f64, f64, usize) = (1.0, 24.0, 15);

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// `| ‖d‖ - d* |`
pub fn control_error(d: Vec2, d_star: f64) -> f64 {
    (d.norm() - d_star).abs()
}

/// `‖p_T - p̂_T‖`
pub fn estimation_error(p_t: Vec2, p_hat_t: Vec2) -> f64 {
    (p_t - p_hat_t).norm()
}

/// A target motion for one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    /// Along +x at `v` m/s.
    ConstantVelocity { v: f64 },
    Circle { r: f64, omega: f64 },
    /// Double-integrator target; randomness comes from the trial's target stream.
    Nonholonomic,
    /// Fixed speed, random yaw rates.
    FixedSpeedNonholonomic { speed: f64 },
}

impl Scenario {
    /// Parse `constant:V`, `circle:OMEGA[:R]`, `nonholonomic`, `fixed-speed:V`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.parse::<f64>().map_err(|_| Error::UnknownScenario(s.to_string()));
        match parts.as_slice() {
            ["constant", v] => Ok(Scenario::ConstantVelocity { v: num(v)? }),
            ["circle", w] => Ok(Scenario::Circle {
                r: CIRCLE_RADIUS,
                omega: num(w)?,
            }),
            ["circle", w, r] => Ok(Scenario::Circle {
                r: num(r)?,
                omega: num(w)?,
            }),
            ["nonholonomic"] => Ok(Scenario::Nonholonomic),
            ["fixed-speed", v] => Ok(Scenario::FixedSpeedNonholonomic { speed: num(v)? }),
            _ => Err(Error::UnknownScenario(s.to_string())),
        }
    }

    /// Nominal target speed, used for the speed-ratio axis.
    pub fn nominal_speed(&self) -> Option<f64> {
        match *self {
            Scenario::ConstantVelocity { v } => Some(v.abs()),
            Scenario::Circle { r, omega } => Some((r * omega).abs()),
            Scenario::FixedSpeedNonholonomic { speed } => Some(speed),
            Scenario::Nonholonomic => None,
        }
    }

    fn trajectory(&self, cfg: &RunConfig, target_rng: &mut SimRng) -> Trajectory {
        let dt = cfg.dt();
        let start = cfg.target_start();
        let period = cfg.nonholonomic.resample_period;
        match *self {
            Scenario::ConstantVelocity { v } => Trajectory::constant_velocity(start, v, dt),
            Scenario::Circle { r, omega } => Trajectory::circle(r, omega, dt),
            Scenario::Nonholonomic => {
                let t = NonholonomicTarget::random_start(start, cfg.bounds(), period, target_rng);
                Trajectory::nonholonomic(t, dt, SimRng::from_rng(target_rng))
            }
            Scenario::FixedSpeedNonholonomic { speed } => {
                let t = NonholonomicTarget::fixed_speed(start, speed, cfg.bounds(), period, target_rng);
                Trajectory::nonholonomic(t, dt, SimRng::from_rng(target_rng))
            }
        }
    }
}

/// Source of the controller's target estimate during a trial.
#[derive(Debug, Clone, Copy)]
pub enum Estimator<'a> {
    /// Ground truth `[d, v_T]`.
    Oracle,
    Lstm(&'a LstmModel),
    /// No estimator: the initial target guess is held and `v̂_T = 0`.
    HeldInitialGuess,
}

impl Estimator<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            Estimator::Oracle => "oracle",
            Estimator::Lstm(_) => "lstm",
            Estimator::HeldInitialGuess => "held-initial-guess",
        }
    }
}

/// One logged control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRow {
    pub t: f64,
    pub target_pos: Vec2,
    pub agent_pos: Vec2,
    pub target_vel: Vec2,
    pub command: Vec2,
    pub bearing: Vec2,
    pub d_hat: Vec2,
    pub v_hat: Vec2,
    pub control_error: f64,
    pub estimation_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub dt: f64,
    pub rows: Vec<TrialRow>,
    /// Step at which the range exceeded the abort radius, if it did.
    pub diverged_at: Option<usize>,
}

impl TrialLog {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub const CSV_HEADER: [&'static str; 19] = [
        "t",
        "p_T_x",
        "p_T_y",
        "p_A_x",
        "p_A_y",
        "v_T_x",
        "v_T_y",
        "u_x",
        "u_y",
        "phi_x",
        "phi_y",
        "d_hat_x",
        "d_hat_y",
        "v_hat_x",
        "v_hat_y",
        "control_error",
        "estimation_error",
        "p_hat_T_x",
        "p_hat_T_y",
    ];

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::CSV_HEADER)?;
        for r in &self.rows {
            let p_hat = r.agent_pos + r.d_hat;
            let mut rec = vec![format!("{:.6}", r.t)];
            for v in [
                r.target_pos.x,
                r.target_pos.y,
                r.agent_pos.x,
                r.agent_pos.y,
                r.target_vel.x,
                r.target_vel.y,
                r.command.x,
                r.command.y,
                r.bearing.x,
                r.bearing.y,
                r.d_hat.x,
                r.d_hat.y,
                r.v_hat.x,
                r.v_hat.y,
                r.control_error,
                r.estimation_error,
                p_hat.x,
                p_hat.y,
            ] {
                rec.push(v.to_string());
            }
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Run one closed-loop trial of `steps` control periods.
///
/// `trial_id` selects the target-motion and sensor-noise streams; two trials
/// with the same id see the same target trajectory whatever their noise level.
pub fn run_trial(cfg: &RunConfig, scenario: Scenario, estimator: Estimator<'_>, steps: usize, trial_id: u64) -> Result<TrialLog> {
    let seed = cfg.run.seed;
    let mut target_rng = derive(seed, Purpose::EvalTarget, trial_id, 0);
    let noise_rng = derive(seed, Purpose::EvalNoise, trial_id, 0);
    let trajectory = scenario.trajectory(cfg, &mut target_rng);
    let mut settings = loop_settings(cfg);
    if let Estimator::Lstm(m) = estimator {
        if m.window > settings.gains.window + usize::from(cfg.model.window_plus_one) {
            return Err(Error::WrongWindowLength {
                expected: settings.window_len,
                got: m.window,
            });
        }
        settings.window_len = m.window;
    }
    let mut lp = ClosedLoop::new(settings, trajectory, cfg.agent_start(), noise_rng);
    let d_star = cfg.controller.d_star;
    let initial_guess = cfg.initial_estimate();
    let mut log = TrialLog {
        dt: cfg.dt(),
        rows: Vec::with_capacity(steps),
        diverged_at: None,
    };
    for _ in 0..steps {
        let rec = lp.step(|ctx| match estimator {
            Estimator::Oracle => Ok(ctx.truth),
            Estimator::Lstm(m) => m.estimate(ctx.window),
            Estimator::HeldInitialGuess => Ok(TargetEstimate {
                d_hat: initial_guess - ctx.agent.pos,
                v_hat: Vec2::ZERO,
            }),
        });
        let rec = match rec {
            Ok(r) => r,
            Err(Error::Diverged { step, .. }) => {
                log.diverged_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        };
        let est = rec.estimate.unwrap_or(TargetEstimate {
            d_hat: initial_guess - rec.agent_pos,
            v_hat: Vec2::ZERO,
        });
        log.rows.push(TrialRow {
            t: rec.t,
            target_pos: rec.target_pos,
            agent_pos: rec.agent_pos,
            target_vel: rec.target_vel,
            command: rec.command,
            bearing: rec.observation.bearing,
            d_hat: est.d_hat,
            v_hat: est.v_hat,
            control_error: control_error(rec.true_displacement(), d_star),
            estimation_error: estimation_error(rec.target_pos, rec.agent_pos + est.d_hat),
        });
    }
    Ok(log)
}

/// Mean control and estimation error over the last `average_seconds` of the
/// trial, or the whole trial when `None`.
pub fn aggregate(log: &TrialLog, average_seconds: Option<f64>) -> Result<(f64, f64)> {
    let n = match average_seconds {
        Some(s) => (s / log.dt).round() as usize,
        None => log.rows.len(),
    };
    if n == 0 || log.rows.len() < n {
        return Err(Error::TrialTooShort {
            steps: log.rows.len(),
            needed: n.max(1),
        });
    }
    let tail = &log.rows[log.rows.len() - n..];
    let ctrl = tail.iter().map(|r| r.control_error).sum::<f64>() / n as f64;
    let est = tail.iter().map(|r| r.estimation_error).sum::<f64>() / n as f64;
    Ok((ctrl, est))
}

/// Summary of one trial within a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSummary {
    pub index: usize,
    /// Swept parameter (speed, angular rate, noise sigma or trial id).
    pub param: f64,
    /// `‖v_T‖ / k_t` where a nominal speed exists.
    pub speed_ratio: Option<f64>,
    pub mean_control_error: f64,
    pub mean_estimation_error: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub name: String,
    pub trials: Vec<TrialSummary>,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> MeanStd {
    let n = xs.clone().count();
    if n == 0 {
        return MeanStd {
            mean: f64::NAN,
            std: f64::NAN,
        };
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    MeanStd { mean, std: var.sqrt() }
}

impl SweepResult {
    pub fn diverged_count(&self) -> usize {
        self.trials.iter().filter(|t| t.diverged).count()
    }

    /// Control and estimation error statistics across trials.
    pub fn stats(&self, include_diverged: bool) -> (MeanStd, MeanStd) {
        let kept = self.trials.iter().filter(|t| include_diverged || !t.diverged);
        (
            mean_std(kept.clone().map(|t| t.mean_control_error)),
            mean_std(kept.map(|t| t.mean_estimation_error)),
        )
    }

    pub const SUMMARY_HEADER: [&'static str; 6] =
        ["trial", "param", "speed_ratio", "mean_control_error", "mean_estimation_error", "diverged"];

    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::SUMMARY_HEADER)?;
        for t in &self.trials {
            out.write_record([
                t.index.to_string(),
                t.param.to_string(),
                t.speed_ratio.map(|r| r.to_string()).unwrap_or_default(),
                t.mean_control_error.to_string(),
                t.mean_estimation_error.to_string(),
                u8::from(t.diverged).to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Long-format rows (`sweep, trial, param, speed_ratio, metric, value`) for
/// histogram and speed-ratio plots.
pub fn write_long_csv<W: Write>(results: &[SweepResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sweep", "trial", "param", "speed_ratio", "metric", "value"])?;
    for r in results {
        for t in &r.trials {
            for (metric, value) in [
                ("control_error", t.mean_control_error),
                ("estimation_error", t.mean_estimation_error),
            ] {
                out.write_record([
                    r.name.clone(),
                    t.index.to_string(),
                    t.param.to_string(),
                    t.speed_ratio.map(|v| v.to_string()).unwrap_or_default(),
                    metric.to_string(),
                    value.to_string(),
                ])?;
            }
        }
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// One trial of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialPlan {
    pub scenario: Scenario,
    pub param: f64,
    pub steps: usize,
    pub trial_id: u64,
    pub average_seconds: Option<f64>,
}

/// Trials per parallel batch. Logs of a batch are handed to the callback in
/// index order before the next batch starts.
const TRIAL_BATCH: usize = 16;

/// Run `plans` and summarise them. `on_trial` sees every full log in order.
pub fn run_sweep<F>(cfg: &RunConfig, name: &str, plans: &[TrialPlan], estimator: Estimator<'_>, mut on_trial: F) -> Result<SweepResult>
where
    F: FnMut(usize, &TrialPlan, &TrialLog) -> Result<()>,
{
    let k_t = cfg.controller.k_t;
    let mut trials = Vec::with_capacity(plans.len());
    for (b, batch) in plans.chunks(TRIAL_BATCH).enumerate() {
        let logs: Vec<Result<TrialLog>> = batch
            .par_iter()
            .map(|p| run_trial(cfg, p.scenario, estimator, p.steps, p.trial_id))
            .collect();
        for (j, (plan, log)) in batch.iter().zip(logs).enumerate() {
            let index = b * TRIAL_BATCH + j;
            let log = log?;
            on_trial(index, plan, &log)?;
            let (ctrl, est) = if log.diverged() {
                // partial trial: average what there is
                aggregate(&log, None).unwrap_or((f64::INFINITY, f64::INFINITY))
            } else {
                aggregate(&log, plan.average_seconds)?
            };
            trials.push(TrialSummary {
                index,
                param: plan.param,
                speed_ratio: plan.scenario.nominal_speed().map(|v| v / k_t),
                mean_control_error: ctrl,
                mean_estimation_error: est,
                diverged: log.diverged(),
            });
        }
    }
    Ok(SweepResult {
        name: name.to_string(),
        trials,
    })
}

pub fn constant_velocity_plans() -> Vec<TrialPlan> {
    let (lo, hi, n) = CV_SPEED_GRID;
    linspace(lo, hi, n)
        .into_iter()
        .enumerate()
        .map(|(k, v)| TrialPlan {
            scenario: Scenario::ConstantVelocity { v },
            param: v,
            steps: CV_STEPS,
            trial_id: k as u64,
            average_seconds: Some(AVERAGE_SECONDS),
        })
        .collect()
}

pub fn circle_plans() -> Vec<TrialPlan> {
    let (lo, hi, n) = CIRCLE_OMEGA_GRID;
    linspace(lo, hi, n)
        .into_iter()
        .enumerate()
        .map(|(k, omega)| TrialPlan {
            scenario: Scenario::Circle { r: CIRCLE_RADIUS, omega },
            param: omega,
            steps: CIRCLE_STEPS,
            trial_id: k as u64,
            average_seconds: Some(AVERAGE_SECONDS),
        })
        .collect()
}

pub fn nonholonomic_plans(trials: usize, steps: usize, average_seconds: Option<f64>) -> Vec<TrialPlan> {
    (0..trials)
        .map(|k| TrialPlan {
            scenario: Scenario::Nonholonomic,
            param: k as f64,
            steps,
            trial_id: k as u64,
            average_seconds,
        })
        .collect()
}

/// Fast-target plans: constant velocity, circle and fixed-speed nonholonomic.
pub fn fast_target_plans(trials: usize, steps: usize) -> Vec<(&'static str, Vec<TrialPlan>)> {
    let make = |grid: (f64, f64, usize), f: &dyn Fn(f64) -> Scenario| -> Vec<TrialPlan> {
        linspace(grid.0, grid.1, trials)
            .into_iter()
            .enumerate()
            .map(|(k, p)| TrialPlan {
                scenario: f(p),
                param: p,
                steps,
                trial_id: k as u64,
                average_seconds: Some(AVERAGE_SECONDS),
            })
            .collect()
    };
    vec![
        (
            "fast-constant-velocity",
            make(FAST_CV_SPEED_GRID, &|v| Scenario::ConstantVelocity { v }),
        ),
        (
            "fast-circle",
            make(FAST_CIRCLE_OMEGA_GRID, &|omega| Scenario::Circle { r: CIRCLE_RADIUS, omega }),
        ),
        (
            "fast-nonholonomic",
            make(FAST_NONHOLONOMIC_SPEED_GRID, &|speed| Scenario::FixedSpeedNonholonomic { speed }),
        ),
    ]
}

pub fn sweep_constant_velocity<F>(cfg: &RunConfig, estimator: Estimator<'_>, on_trial: F) -> Result<SweepResult>
where
    F: FnMut(usize, &TrialPlan, &TrialLog) -> Result<()>,
{
    run_sweep(cfg, "constant-velocity", &constant_velocity_plans(), estimator, on_trial)
}

pub fn sweep_circle<F>(cfg: &RunConfig, estimator: Estimator<'_>, on_trial: F) -> Result<SweepResult>
where
    F: FnMut(usize, &TrialPlan, &TrialLog) -> Result<()>,
{
    run_sweep(cfg, "circle", &circle_plans(), estimator, on_trial)
}

pub fn sweep_nonholonomic<F>(cfg: &RunConfig, estimator: Estimator<'_>, n_trials: usize, on_trial: F) -> Result<SweepResult>
where
    F: FnMut(usize, &TrialPlan, &TrialLog) -> Result<()>,
{
    let e = &cfg.evaluation;
    let plans = nonholonomic_plans(n_trials, e.nonholonomic_steps, e.nonholonomic_average_seconds);
    run_sweep(cfg, "nonholonomic", &plans, estimator, on_trial)
}

/// One nonholonomic sweep per noise level, all on the same target trajectories.
/// `models` pairs each sigma with the model trained at that sigma.
pub fn sweep_noise<F>(
    cfg: &RunConfig,
    models: &[(f64, Estimator<'_>)],
    trials: usize,
    steps: usize,
    mut on_trial: F,
) -> Result<Vec<SweepResult>>
where
    F: FnMut(f64, usize, &TrialPlan, &TrialLog) -> Result<()>,
{
    let plans = nonholonomic_plans(trials, steps, None);
    models
        .iter()
        .map(|&(sigma, est)| {
            let mut c = match est {
                Estimator::Lstm(m) => cfg.adopt_model(m)?,
                _ => cfg.clone(),
            };
            c.noise.sigma = sigma;
            let name = format!("noise-{sigma}");
            run_sweep(&c, &name, &plans, est, |i, p, l| on_trial(sigma, i, p, l))
        })
        .collect()
}

/// Fast-target sweeps; `cfg` should carry the fast-target gains.
pub fn sweep_fast_target<F>(cfg: &RunConfig, estimator: Estimator<'_>, mut on_trial: F) -> Result<Vec<SweepResult>>
where
    F: FnMut(&str, usize, &TrialPlan, &TrialLog) -> Result<()>,
{
    fast_target_plans(cfg.evaluation.fast_trials, cfg.evaluation.fast_steps)
        .into_iter()
        .map(|(name, plans)| run_sweep(cfg, name, &plans, estimator, |i, p, l| on_trial(name, i, p, l)))
        .collect()
}

/// Sweeps runnable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    ConstantVelocity,
    Circle,
    Nonholonomic,
    Noise,
    FastTarget,
}

impl SweepKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "constant-velocity" => SweepKind::ConstantVelocity,
            "circle" => SweepKind::Circle,
            "nonholonomic" => SweepKind::Nonholonomic,
            "noise" => SweepKind::Noise,
            "fast-target" => SweepKind::FastTarget,
            _ => return None,
        })
    }
}
