//! One agent, one target, one estimator decision per control period.
//!
//! Per control step `k` the loop:
//! 1. reads the true target state and the agent state,
//! 2. forms the (possibly noisy) observation and appends it to the window,
//! 3. from step `l` on, asks the caller for a target estimate,
//! 4. advances the target one period and integrates the agent over that
//!    period in `substeps` equal slices. The estimate is held for the whole
//!    period; bearing directions are recomputed from the geometry at every
//!    slice, carrying the period's sensor-noise offset along.

use std::collections::VecDeque;

use crate::controller::{control, saturate, ControllerGains, TargetEstimate};
use crate::dynamics::{agent_step, AgentState, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{displacement, unit_bearing, Bearing, Vec2};
use crate::rng::SimRng;
use crate::sensing::{observe, NoiseModel, Observation};

#[derive(Debug, Clone, Copy)]
pub struct LoopSettings {
    pub gains: ControllerGains,
    pub dt: f64,
    pub substeps: usize,
    pub noise: NoiseModel,
    pub abort_radius: f64,
    pub max_speed: Option<f64>,
    /// Observations handed to the estimator (l, or l+1).
    pub window_len: usize,
}

/// What the estimator callback gets to see.
pub struct DecisionContext<'a> {
    pub step: usize,
    pub window: &'a [Observation],
    pub agent: AgentState,
    /// Ground truth `[d, v_T]`. Only the oracle and training collection may use it.
    pub truth: TargetEstimate,
}

/// Everything that happened in one control step.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub target_pos: Vec2,
    pub target_vel: Vec2,
    pub agent_pos: Vec2,
    pub observation: Observation,
    /// Estimate the controller used (None during the tangential phase).
    pub estimate: Option<TargetEstimate>,
    /// Command at the start of the period.
    pub command: Vec2,
}

impl StepRecord {
    pub fn true_displacement(&self) -> Vec2 {
        displacement(self.target_pos, self.agent_pos)
    }
}

pub struct ClosedLoop {
    pub settings: LoopSettings,
    pub trajectory: Trajectory,
    pub agent: AgentState,
    window: VecDeque<Observation>,
    step: usize,
    noise_rng: SimRng,
}

impl ClosedLoop {
    pub fn new(settings: LoopSettings, trajectory: Trajectory, agent_start: Vec2, noise_rng: SimRng) -> Self {
        Self {
            settings,
            trajectory,
            agent: AgentState {
                pos: agent_start,
                vel: Vec2::ZERO,
            },
            window: VecDeque::with_capacity(settings.window_len + 1),
            step: 0,
            noise_rng,
        }
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Run one control period. `decide` is called only once the controller's
    /// gate is open and must return the estimate the controller will use.
    pub fn step<F>(&mut self, decide: F) -> Result<StepRecord>
    where
        F: FnOnce(&DecisionContext<'_>) -> Result<TargetEstimate>,
    {
        let s = self.settings;
        let k = self.step;
        let target_pos = self.trajectory.position();
        let target_vel = self.trajectory.velocity();
        let d = displacement(target_pos, self.agent.pos);
        let range = d.norm();
        if !(range <= s.abort_radius) {
            return Err(Error::Diverged { step: k, range });
        }

        let obs = observe(target_pos, &self.agent, s.noise, &mut self.noise_rng)?;
        self.window.push_back(obs);
        while self.window.len() > s.window_len {
            self.window.pop_front();
        }

        let estimate = if k >= s.gains.window {
            let ctx = DecisionContext {
                step: k,
                window: self.window.make_contiguous(),
                agent: self.agent,
                truth: TargetEstimate {
                    d_hat: d,
                    v_hat: target_vel,
                },
            };
            Some(decide(&ctx)?)
        } else {
            None
        };

        let true_phi = d / range;
        let noise_offset = obs.raw_bearing - true_phi;
        self.trajectory.advance();
        let next_target = self.trajectory.position();
        let h = s.dt / s.substeps as f64;
        let mut command = Vec2::ZERO;
        for j in 0..s.substeps {
            let bearing = if j == 0 {
                obs.unit_bearing()
            } else {
                let p_t = target_pos.lerp(next_target, j as f64 / s.substeps as f64);
                let phi = unit_bearing(p_t, self.agent.pos)?.dir();
                if s.noise.sigma == 0.0 {
                    Bearing::from_vector(phi)?
                } else {
                    Bearing::from_vector(phi + noise_offset)?
                }
            };
            let mut u = control(k, bearing, estimate.as_ref(), &s.gains)?;
            if let Some(m) = s.max_speed {
                u = saturate(u, m);
            }
            if j == 0 {
                command = u;
            }
            self.agent = agent_step(self.agent, u, h)?;
        }
        self.step += 1;

        Ok(StepRecord {
            step: k,
            t: k as f64 * s.dt,
            target_pos,
            target_vel,
            agent_pos: target_pos - d,
            observation: obs,
            estimate,
            command,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Purpose};

    fn settings(substeps: usize) -> LoopSettings {
        LoopSettings {
            gains: ControllerGains {
                k_t: 60.0,
                k_r: 10.0,
                d_star: 10.0,
                window: 60,
            },
            dt: 0.02,
            substeps,
            noise: NoiseModel::NONE,
            abort_radius: 500.0,
            max_speed: None,
            window_len: 60,
        }
    }

    fn settle_radius(substeps: usize) -> f64 {
        let traj = Trajectory::constant_velocity(Vec2::ZERO, 0.0, 0.02);
        let mut lp = ClosedLoop::new(settings(substeps), traj, Vec2::new(15.0, 0.0), derive(0, Purpose::EvalNoise, 0, 0));
        let mut last = 0.0;
        for _ in 0..1000 {
            let r = lp.step(|c| Ok(c.truth)).unwrap();
            last = r.true_displacement().norm();
        }
        last
    }

    #[test]
    fn single_substep_matches_discrete_equilibrium() {
        // One Euler step per period: r = sqrt(((1 - a) r + a d*)^2 + b^2)
        // with a = k_r dt = 0.2, b = k_t dt = 1.2. Solving the quadratic
        // 0.36 r^2 - 3.2 r - 5.44 = 0 gives the settled radius.
        let expected = (3.2 + (3.2f64 * 3.2 + 4.0 * 0.36 * 5.44).sqrt()) / (2.0 * 0.36);
        assert!((settle_radius(1) - expected).abs() < 1e-6, "{} vs {expected}", settle_radius(1));
    }

    #[test]
    fn substeps_shrink_the_discretisation_offset() {
        let r10 = settle_radius(10);
        assert!((r10 - 10.0).abs() < 0.05, "{r10}");
        assert!((settle_radius(20) - 10.0).abs() < (r10 - 10.0).abs());
    }

    #[test]
    fn divergence_is_reported() {
        let traj = Trajectory::constant_velocity(Vec2::ZERO, 0.0, 0.02);
        let mut s = settings(1);
        s.abort_radius = 14.0;
        let mut lp = ClosedLoop::new(s, traj, Vec2::new(15.0, 0.0), derive(0, Purpose::EvalNoise, 0, 0));
        assert!(matches!(lp.step(|c| Ok(c.truth)), Err(Error::Diverged { step: 0, .. })));
    }
}
