//! Estimator observations and the additive Gaussian input-noise model.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::AgentState;
use crate::error::{Error, Result};
use crate::geometry::{unit_bearing, Bearing, Vec2, MIN_RANGE};
use crate::rng::SimRng;

/// One step of estimator input: bearing plus the agent's own velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Unit bearing (renormalised after noise).
    pub bearing: Vec2,
    pub agent_vel: Vec2,
    /// Perturbed bearing before renormalisation. Equal to `bearing` when noiseless.
    pub raw_bearing: Vec2,
}

impl Observation {
    pub fn unit_bearing(&self) -> Bearing {
        // the constructor guarantees a non-degenerate bearing
        Bearing::from_vector(self.bearing).expect("observation bearing is unit-norm")
    }

    /// `[phi_x, phi_y, v_x, v_y]`, optionally with the unnormalised bearing.
    pub fn features(&self, raw_bearing: bool) -> [f64; 4] {
        let b = if raw_bearing { self.raw_bearing } else { self.bearing };
        [b.x, b.y, self.agent_vel.x, self.agent_vel.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel { sigma: 0.0 };

    pub fn new(sigma: f64) -> Self {
        Self { sigma }
    }

    /// Four i.i.d. N(0, sigma^2) draws. Consumes nothing from `rng` when sigma is 0.
    pub fn sample(&self, rng: &mut SimRng) -> [f64; 4] {
        if self.sigma == 0.0 {
            return [0.0; 4];
        }
        let mut out = [0.0; 4];
        for o in &mut out {
            let z: f64 = StandardNormal.sample(rng);
            *o = self.sigma * z;
        }
        out
    }
}

/// Build the observation for the current geometry, perturbing all four
/// components and renormalising the bearing.
pub fn observe(target_pos: Vec2, agent: &AgentState, noise: NoiseModel, rng: &mut SimRng) -> Result<Observation> {
    let phi = unit_bearing(target_pos, agent.pos)?.dir();
    let n = noise.sample(rng);
    let raw = phi + Vec2::new(n[0], n[1]);
    let norm = raw.norm();
    if norm < MIN_RANGE {
        return Err(Error::DegenerateBearing { norm });
    }
    let bearing = if noise.sigma == 0.0 { phi } else { raw / norm };
    Ok(Observation {
        bearing,
        agent_vel: agent.vel + Vec2::new(n[2], n[3]),
        raw_bearing: raw,
    })
}
