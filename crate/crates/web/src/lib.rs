//! WebAssembly bindings for the demo page in `www/`.
//!
//! Three operations are exposed: run one closed-loop trial, compute the
//! scheduled-sampling threshold per iteration, and read a weight file's
//! header. Everything else on the page is drawing.

use circumnav::evaluation::{aggregate, run_trial, Estimator, Scenario};
use circumnav::neural::{from_bytes, read_header_bytes};
use circumnav::training::switching_threshold;
use circumnav::{LstmModel, RunConfig};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// A finished trial, flattened for drawing.
#[wasm_bindgen]
#[derive(Debug)]
pub struct Trial {
    dt: f64,
    target: Vec<f64>,
    agent: Vec<f64>,
    estimate: Vec<f64>,
    control_error: Vec<f64>,
    estimation_error: Vec<f64>,
    diverged: bool,
    settled: Option<(f64, f64)>,
}

#[wasm_bindgen]
impl Trial {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.control_error.len()
    }

    pub fn is_empty(&self) -> bool {
        self.control_error.is_empty()
    }

    /// Target positions as `[x0, y0, x1, y1, ...]`.
    pub fn target(&self) -> Vec<f64> {
        self.target.clone()
    }

    pub fn agent(&self) -> Vec<f64> {
        self.agent.clone()
    }

    /// Estimated target positions, `p_A + d̂`.
    pub fn estimate(&self) -> Vec<f64> {
        self.estimate.clone()
    }

    pub fn control_error(&self) -> Vec<f64> {
        self.control_error.clone()
    }

    pub fn estimation_error(&self) -> Vec<f64> {
        self.estimation_error.clone()
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    /// Mean control error over the last 5 s, NaN if the trial is shorter.
    pub fn settled_control_error(&self) -> f64 {
        self.settled.map_or(f64::NAN, |s| s.0)
    }

    pub fn settled_estimation_error(&self) -> f64 {
        self.settled.map_or(f64::NAN, |s| s.1)
    }
}

/// Run one trial with the paper profile.
///
/// `scenario` uses the CLI syntax (`constant:9`, `circle:0.2`, `nonholonomic`,
/// `fixed-speed:6`). `estimator` is `oracle`, `ablation` or `lstm`; the last
/// needs `weights`, the bytes of a weight file.
#[wasm_bindgen]
pub fn simulate(scenario: &str, estimator: &str, steps: usize, seed: u64, trial: u64, weights: Option<Vec<u8>>) -> Result<Trial, JsError> {
    run(scenario, estimator, steps, seed, trial, weights.as_deref()).map_err(js_err)
}

/// [`simulate`] without the JS error type, so it can run natively.
pub fn run(scenario: &str, estimator: &str, steps: usize, seed: u64, trial: u64, weights: Option<&[u8]>) -> Result<Trial, String> {
    let err = |e: circumnav::Error| e.to_string();
    let scenario = Scenario::parse(scenario).map_err(err)?;
    let mut cfg = RunConfig::paper();
    cfg.run.seed = seed;
    cfg.validate().map_err(err)?;
    let model: Option<LstmModel> = match estimator {
        "lstm" => {
            let bytes = weights.ok_or("the lstm estimator needs a weight file")?;
            Some(from_bytes(bytes).map_err(err)?)
        }
        "oracle" | "ablation" => None,
        other => return Err(format!("unknown estimator {other:?}")),
    };
    let est = match (&model, estimator) {
        (Some(m), _) => {
            cfg = cfg.adopt_model(m).map_err(err)?;
            Estimator::Lstm(m)
        }
        (None, "oracle") => Estimator::Oracle,
        _ => Estimator::HeldInitialGuess,
    };
    let log = run_trial(&cfg, scenario, est, steps, trial).map_err(err)?;
    let mut out = Trial {
        dt: log.dt,
        target: Vec::with_capacity(2 * log.rows.len()),
        agent: Vec::with_capacity(2 * log.rows.len()),
        estimate: Vec::with_capacity(2 * log.rows.len()),
        control_error: Vec::with_capacity(log.rows.len()),
        estimation_error: Vec::with_capacity(log.rows.len()),
        diverged: log.diverged(),
        settled: aggregate(&log, Some(5.0)).ok(),
    };
    for r in &log.rows {
        let p_hat = r.agent_pos + r.d_hat;
        out.target.extend([r.target_pos.x, r.target_pos.y]);
        out.agent.extend([r.agent_pos.x, r.agent_pos.y]);
        out.estimate.extend([p_hat.x, p_hat.y]);
        out.control_error.push(r.control_error);
        out.estimation_error.push(r.estimation_error);
    }
    Ok(out)
}

/// Probability of driving with ground truth at each training iteration.
#[wasm_bindgen]
pub fn threshold_schedule(iterations: usize) -> Vec<f64> {
    (0..iterations).map(|i| switching_threshold(i, iterations)).collect()
}

/// One-line summary of a weight file's header; errors if the checksum fails.
#[wasm_bindgen]
pub fn describe_weights(bytes: &[u8]) -> Result<String, JsError> {
    describe(bytes).map_err(js_err)
}

pub fn describe(bytes: &[u8]) -> Result<String, circumnav::Error> {
    let h = read_header_bytes(bytes)?;
    from_bytes(bytes)?;
    let n = h.normalization;
    Ok(format!(
        "version {}, LSTM {}→{}→{}, window {}, {} parameters, scales {}/{}/{}{}",
        h.version,
        h.input_size,
        h.hidden_size,
        h.output_size,
        h.window,
        h.param_count,
        n.velocity_scale,
        n.position_scale,
        n.target_velocity_scale,
        if h.raw_bearing { ", raw noisy bearing" } else { "" }
    ))
}
