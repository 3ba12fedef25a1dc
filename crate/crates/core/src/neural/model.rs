use serde::{Deserialize, Serialize};

use crate::controller::TargetEstimate;
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::sensing::Observation;

use super::lstm::LstmParams;

pub const INPUT_SIZE: usize = 4;
pub const OUTPUT_SIZE: usize = 4;

/// Fixed input/output scaling between physical units and network units.
///
/// Inputs are `[phi_x, phi_y, v_x / velocity_scale, v_y / velocity_scale]`;
/// outputs are `[d_x, d_y] / position_scale` and `[v_x, v_y] / target_velocity_scale`.
/// All ones means raw physical values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub velocity_scale: f64,
    pub position_scale: f64,
    pub target_velocity_scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization {
        velocity_scale: 1.0,
        position_scale: 1.0,
        target_velocity_scale: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("velocity_scale", self.velocity_scale),
            ("position_scale", self.position_scale),
            ("target_velocity_scale", self.target_velocity_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn encode_input(&self, obs: &Observation, raw_bearing: bool) -> [f64; 4] {
        let f = obs.features(raw_bearing);
        [f[0], f[1], f[2] / self.velocity_scale, f[3] / self.velocity_scale]
    }

    pub fn encode_target(&self, truth: &[f64; 4]) -> [f64; 4] {
        [
            truth[0] / self.position_scale,
            truth[1] / self.position_scale,
            truth[2] / self.target_velocity_scale,
            truth[3] / self.target_velocity_scale,
        ]
    }

    pub fn decode_output(&self, y: &[f64]) -> [f64; 4] {
        [
            y[0] * self.position_scale,
            y[1] * self.position_scale,
            y[2] * self.target_velocity_scale,
            y[3] * self.target_velocity_scale,
        ]
    }
}

/// The target estimator: LSTM parameters plus the window length and input
/// conventions it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub params: LstmParams,
    pub window: usize,
    pub normalization: Normalization,
    /// Feed the perturbed bearing without renormalisation.
    pub raw_bearing: bool,
}

impl LstmModel {
    pub fn new(hidden: usize, window: usize, normalization: Normalization, rng: &mut SimRng) -> Self {
        Self {
            params: LstmParams::init(INPUT_SIZE, hidden, OUTPUT_SIZE, rng),
            window,
            normalization,
            raw_bearing: false,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.params.hidden_size()
    }

    /// Network-unit input sequence for `window` (oldest first).
    pub fn encode_window(&self, window: &[Observation], out: &mut Vec<f64>) {
        out.clear();
        out.reserve(window.len() * INPUT_SIZE);
        for o in window {
            out.extend_from_slice(&self.normalization.encode_input(o, self.raw_bearing));
        }
    }

    /// Estimate `[d_hat, v_hat]` from exactly `self.window` observations.
    pub fn estimate(&self, window: &[Observation]) -> Result<TargetEstimate> {
        if window.len() != self.window {
            return Err(Error::WrongWindowLength {
                expected: self.window,
                got: window.len(),
            });
        }
        let mut x = Vec::new();
        self.encode_window(window, &mut x);
        let y = self.params.forward(&x)?;
        Ok(TargetEstimate::from_array(self.normalization.decode_output(&y)))
    }
}

/// Run the estimator over a window.
pub fn model_forward(window: &[Observation], model: &LstmModel) -> Result<TargetEstimate> {
    model.estimate(window)
}
