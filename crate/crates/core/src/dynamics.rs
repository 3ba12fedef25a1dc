//! Target trajectory families and the velocity-commanded agent.
//!
//! Everything advances on a fixed control clock (50 Hz by default). Constant
//! velocity and circle targets are evaluated in closed form from the step
//! index; the double-integrator target uses explicit Euler.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::rng::SimRng;

/// Discrete control clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub step_index: usize,
    pub dt: f64,
}

impl SimClock {
    pub fn from_frequency(hz: f64) -> Self {
        Self {
            step_index: 0,
            dt: 1.0 / hz,
        }
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.dt
    }

    pub fn tick(&mut self) {
        self.step_index += 1;
    }
}

impl Default for SimClock {
    fn default() -> Self {
        Self::from_frequency(50.0)
    }
}

/// Target moving along +x at constant speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantVelocityTarget {
    pub pos: Vec2,
    pub v: f64,
}

impl ConstantVelocityTarget {
    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.v, 0.0)
    }
}

pub fn constant_velocity_step(state: ConstantVelocityTarget, dt: f64) -> ConstantVelocityTarget {
    ConstantVelocityTarget {
        pos: Vec2::new(state.pos.x + state.v * dt, state.pos.y),
        v: state.v,
    }
}

/// Target on a circle of radius `r` centred at `[0, r]`, starting at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleTarget {
    pub r: f64,
    pub omega: f64,
}

impl CircleTarget {
    pub fn centre(&self) -> Vec2 {
        Vec2::new(0.0, self.r)
    }

    pub fn at(&self, t: f64) -> (Vec2, Vec2) {
        circle_position(t, self.r, self.omega)
    }
}

/// Position and analytic velocity of the circle trajectory at time `t`.
pub fn circle_position(t: f64, r: f64, omega: f64) -> (Vec2, Vec2) {
    let phase = omega * t - FRAC_PI_2;
    let (s, c) = phase.sin_cos();
    let pos = Vec2::new(r * c, r * s + r);
    let vel = Vec2::new(-r * omega * s, r * omega * c);
    (pos, vel)
}

/// Limits on the double-integrator target's speeds and accelerations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonholonomicBounds {
    pub v_min: f64,
    pub v_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl Default for NonholonomicBounds {
    fn default() -> Self {
        Self {
            v_min: 0.0,
            v_max: 20.0,
            omega_min: -FRAC_PI_2,
            omega_max: FRAC_PI_2,
            a_min: -5.0,
            a_max: 5.0,
            alpha_min: -FRAC_PI_2,
            alpha_max: FRAC_PI_2,
        }
    }
}

/// How a nonholonomic target's inputs are redrawn every resample period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonholonomicMode {
    /// Draw `a` and `alpha`, reset `omega` to zero.
    DoubleIntegrator,
    /// Speed held fixed, `a = alpha = 0`; `omega` itself is drawn.
    FixedSpeed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonholonomicTarget {
    pub pos: Vec2,
    pub heading: f64,
    pub v: f64,
    pub omega: f64,
    pub a: f64,
    pub alpha: f64,
    pub resample_period: usize,
    pub bounds: NonholonomicBounds,
    pub mode: NonholonomicMode,
}

impl NonholonomicTarget {
    /// Double-integrator target at `pos` with initial inputs drawn from `rng`.
    ///
    /// Initial speed is uniform over the speed bounds and heading uniform over
    /// a full turn; `a` and `alpha` come from the same ranges as in-trial draws.
    pub fn random_start(pos: Vec2, bounds: NonholonomicBounds, period: usize, rng: &mut SimRng) -> Self {
        let v = rng.random_range(bounds.v_min..=bounds.v_max);
        let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let mut t = Self {
            pos,
            heading,
            v,
            omega: 0.0,
            a: 0.0,
            alpha: 0.0,
            resample_period: period,
            bounds,
            mode: NonholonomicMode::DoubleIntegrator,
        };
        t = resample_nonholonomic_inputs(t, rng);
        t
    }

    /// Fixed-speed variant used for the fast-target study.
    pub fn fixed_speed(pos: Vec2, speed: f64, bounds: NonholonomicBounds, period: usize, rng: &mut SimRng) -> Self {
        let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let t = Self {
            pos,
            heading,
            v: speed,
            omega: 0.0,
            a: 0.0,
            alpha: 0.0,
            resample_period: period,
            bounds,
            mode: NonholonomicMode::FixedSpeed,
        };
        resample_nonholonomic_inputs(t, rng)
    }

    pub fn velocity(&self) -> Vec2 {
        let (s, c) = self.heading.sin_cos();
        Vec2::new(self.v * c, self.v * s)
    }
}

/// One explicit Euler step: speeds, clamp, position, heading.
pub fn nonholonomic_step(mut s: NonholonomicTarget, dt: f64) -> NonholonomicTarget {
    s.v += s.a * dt;
    s.omega += s.alpha * dt;
    if s.mode == NonholonomicMode::DoubleIntegrator {
        s.v = s.v.clamp(s.bounds.v_min, s.bounds.v_max);
    }
    s.omega = s.omega.clamp(s.bounds.omega_min, s.bounds.omega_max);
    let (sin, cos) = s.heading.sin_cos();
    s.pos += Vec2::new(cos, sin) * (s.v * dt);
    s.heading += s.omega * dt;
    s
}

/// Draw fresh inputs at a resample boundary.
pub fn resample_nonholonomic_inputs(mut s: NonholonomicTarget, rng: &mut SimRng) -> NonholonomicTarget {
    let b = s.bounds;
    match s.mode {
        NonholonomicMode::DoubleIntegrator => {
            s.a = rng.random_range(b.a_min..=b.a_max);
            s.alpha = rng.random_range(b.alpha_min..=b.alpha_max);
            s.omega = 0.0;
        }
        NonholonomicMode::FixedSpeed => {
            s.a = 0.0;
            s.alpha = 0.0;
            s.omega = rng.random_range(b.omega_min..=b.omega_max);
        }
    }
    s
}

/// Single-integrator agent: velocity is whatever was last commanded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub pos: Vec2,
    pub vel: Vec2,
}

pub fn agent_step(state: AgentState, u: Vec2, dt: f64) -> Result<AgentState> {
    if !u.is_finite() {
        return Err(Error::NonFiniteCommand { x: u.x, y: u.y });
    }
    Ok(AgentState {
        pos: state.pos + u * dt,
        vel: u,
    })
}

/// A target trajectory advanced on the control clock.
#[derive(Debug, Clone)]
pub enum Trajectory {
    ConstantVelocity {
        start: Vec2,
        v: f64,
        step: usize,
        dt: f64,
    },
    Circle {
        target: CircleTarget,
        step: usize,
        dt: f64,
    },
    Nonholonomic {
        target: NonholonomicTarget,
        step: usize,
        dt: f64,
        rng: SimRng,
    },
}

impl Trajectory {
    pub fn constant_velocity(start: Vec2, v: f64, dt: f64) -> Self {
        Trajectory::ConstantVelocity { start, v, step: 0, dt }
    }

    pub fn circle(r: f64, omega: f64, dt: f64) -> Self {
        Trajectory::Circle {
            target: CircleTarget { r, omega },
            step: 0,
            dt,
        }
    }

    pub fn nonholonomic(target: NonholonomicTarget, dt: f64, rng: SimRng) -> Self {
        Trajectory::Nonholonomic { target, step: 0, dt, rng }
    }

    pub fn position(&self) -> Vec2 {
        match self {
            Trajectory::ConstantVelocity { start, v, step, dt } => {
                Vec2::new(start.x + v * (*step as f64 * dt), start.y)
            }
            Trajectory::Circle { target, step, dt } => target.at(*step as f64 * dt).0,
            Trajectory::Nonholonomic { target, .. } => target.pos,
        }
    }

    pub fn velocity(&self) -> Vec2 {
        match self {
            Trajectory::ConstantVelocity { v, .. } => Vec2::new(*v, 0.0),
            Trajectory::Circle { target, step, dt } => target.at(*step as f64 * dt).1,
            Trajectory::Nonholonomic { target, .. } => target.velocity(),
        }
    }

    pub fn step_index(&self) -> usize {
        match self {
            Trajectory::ConstantVelocity { step, .. }
            | Trajectory::Circle { step, .. }
            | Trajectory::Nonholonomic { step, .. } => *step,
        }
    }

    /// Advance one control period. Nonholonomic inputs are redrawn when the
    /// new step index is a positive multiple of the resample period.
    pub fn advance(&mut self) {
        match self {
            Trajectory::ConstantVelocity { step, .. } | Trajectory::Circle { step, .. } => *step += 1,
            Trajectory::Nonholonomic { target, step, dt, rng } => {
                *target = nonholonomic_step(*target, *dt);
                *step += 1;
                if target.resample_period > 0 && *step % target.resample_period == 0 {
                    *target = resample_nonholonomic_inputs(*target, rng);
                }
            }
        }
    }
}
