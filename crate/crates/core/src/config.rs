//! Run configuration.
//!
//! Configs are TOML files with one table per subsystem. A config is always
//! resolved against a preset (`paper`, `desk` or `fast`): keys present in the
//! file override the preset, unknown keys are rejected. The fully resolved
//! config is written next to every run's outputs and can be fed back in
//! unchanged.
//!
//! ```toml
//! preset = "desk"
//!
//! [run]
//! seed = 7
//!
//! [controller]
//! k_t = 60.0
//! window = 30
//!
//! [training]
//! iterations = 10
//! ```

use serde::{Deserialize, Serialize};

use crate::controller::ControllerGains;
use crate::dynamics::NonholonomicBounds;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::neural::{LstmModel, Normalization};
use crate::profiles::{self, Profile};
use crate::sensing::NoiseModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub run: RunSection,
    pub controller: ControllerSection,
    pub simulation: SimulationSection,
    pub noise: NoiseSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub nonholonomic: NonholonomicSection,
    pub evaluation: EvaluationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Worker threads; 0 means one per logical core. Results never depend on it.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub k_t: f64,
    pub k_r: f64,
    pub d_star: f64,
    /// Estimator horizon l; the radial term switches on at step l.
    pub window: usize,
    /// Optional actuator speed limit (m/s). Absent means unsaturated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    /// Control and estimator rate (Hz).
    pub frequency: f64,
    /// Agent integration substeps per control period. The estimate is held
    /// over the period; bearing directions are re-evaluated every substep.
    pub agent_substeps: usize,
    pub target_start: [f64; 2],
    pub agent_start: [f64; 2],
    /// Target position estimate reported before the estimator window fills.
    pub initial_estimate: [f64; 2],
    /// Range (m) beyond which a run counts as diverged.
    pub abort_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma: f64,
    /// Feed the estimator the perturbed bearing without renormalising it.
    pub raw_noisy_bearing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: usize,
    /// Use l+1 observations per window instead of l.
    pub window_plus_one: bool,
    pub velocity_scale: f64,
    pub position_scale: f64,
    pub target_velocity_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub iterations: usize,
    pub samples_per_iteration: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    pub episode_steps: usize,
    /// Relative weights of the trajectory families drawn per episode.
    pub mix_constant_velocity: f64,
    pub mix_circle: f64,
    pub mix_nonholonomic: f64,
    pub cv_speed_min: f64,
    pub cv_speed_max: f64,
    pub circle_radius: f64,
    pub circle_omega_min: f64,
    pub circle_omega_max: f64,
    /// Half-width of the excluded neighbourhood around each evaluation grid
    /// point, as a fraction of the grid spacing.
    pub grid_exclusion: f64,
    /// Initial agent range from the target (m), uniform.
    pub agent_range_min: f64,
    pub agent_range_max: f64,
    /// Episodes simulated per collection wave.
    pub episode_wave: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonholonomicSection {
    pub resample_period: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    pub nonholonomic_trials: usize,
    pub nonholonomic_steps: usize,
    /// Averaging window for nonholonomic trials; absent means the whole trial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonholonomic_average_seconds: Option<f64>,
    pub noise_trials: usize,
    pub noise_steps: usize,
    pub noise_sigmas: Vec<f64>,
    pub fast_trials: usize,
    pub fast_steps: usize,
}

impl RunConfig {
    fn from_profile(p: &Profile) -> Self {
        let b = NonholonomicBounds::default();
        RunConfig {
            preset: p.name.to_string(),
            run: RunSection { seed: 0, workers: 0 },
            controller: ControllerSection {
                k_t: p.k_t,
                k_r: p.k_r,
                d_star: p.d_star,
                window: p.window,
                max_speed: None,
            },
            simulation: SimulationSection {
                frequency: p.frequency,
                agent_substeps: 10,
                target_start: p.target_start.to_array(),
                agent_start: p.agent_start.to_array(),
                initial_estimate: p.initial_estimate.to_array(),
                abort_radius: 500.0,
            },
            noise: NoiseSection {
                sigma: 0.0,
                raw_noisy_bearing: false,
            },
            model: ModelSection {
                hidden: p.hidden,
                window_plus_one: false,
                velocity_scale: 1.0,
                position_scale: 1.0,
                target_velocity_scale: 1.0,
            },
            training: TrainingSection {
                iterations: p.iterations,
                samples_per_iteration: p.dataset_size,
                epochs: p.epochs,
                batch_size: p.batch_size,
                lr: p.lr,
                grad_clip: 5.0,
                episode_steps: 1000,
                mix_constant_velocity: 1.0,
                mix_circle: 1.0,
                mix_nonholonomic: 1.0,
                cv_speed_min: 1.0,
                cv_speed_max: 15.0,
                circle_radius: 20.0,
                circle_omega_min: 0.05,
                circle_omega_max: 0.4,
                grid_exclusion: 0.05,
                agent_range_min: 5.0,
                agent_range_max: 25.0,
                episode_wave: 4,
            },
            nonholonomic: NonholonomicSection {
                resample_period: 75,
                v_min: b.v_min,
                v_max: b.v_max,
                omega_min: b.omega_min,
                omega_max: b.omega_max,
                a_min: b.a_min,
                a_max: b.a_max,
                alpha_min: b.alpha_min,
                alpha_max: b.alpha_max,
            },
            evaluation: EvaluationSection {
                nonholonomic_trials: 1000,
                nonholonomic_steps: 1000,
                nonholonomic_average_seconds: None,
                noise_trials: 500,
                noise_steps: 500,
                noise_sigmas: vec![0.0, 0.1, 0.2, 0.3],
                fast_trials: 15,
                fast_steps: 500,
            },
        }
    }

    /// Published settings: H=512, l=60, 50 iterations of 100k samples.
    pub fn paper() -> Self {
        Self::from_profile(&profiles::PAPER)
    }

    /// Fast-target gains (k_t=25, k_r=4), otherwise as `paper`.
    pub fn fast() -> Self {
        Self::from_profile(&profiles::FAST)
    }

    /// Laptop-scale training: H=64, l=30, 10 iterations of 10k samples,
    /// 5 epochs, with fixed input/output scaling.
    pub fn desk() -> Self {
        let mut c = Self::from_profile(&profiles::PAPER);
        c.preset = "desk".into();
        c.controller.window = 30;
        c.model.hidden = 64;
        c.model.velocity_scale = c.controller.k_t;
        c.model.position_scale = c.controller.d_star;
        c.model.target_velocity_scale = 10.0;
        c.training.iterations = 10;
        c.training.samples_per_iteration = 10_000;
        c.training.epochs = 5;
        // 250-step episodes: 10k samples then span ~45 trajectories, not ~11.
        c.training.episode_steps = 250;
        c.training.batch_size = 16;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            "fast" => Ok(Self::fast()),
            other => Err(Error::UnknownProfile(other.to_string())),
        }
    }

    /// Parse a config file. The `preset` key (default `paper`) selects the base.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_str_with_base(text, None)
    }

    /// Parse with an explicit base preset that wins over the file's `preset` key.
    pub fn from_toml_str_with_base(text: &str, base: Option<&str>) -> Result<Self> {
        let overlay: toml::Table = toml::from_str(text)?;
        let name = match base {
            Some(b) => b.to_string(),
            None => match overlay.get("preset") {
                Some(toml::Value::String(s)) => s.clone(),
                Some(other) => return Err(Error::InvalidConfig(format!("preset must be a string, got {other}"))),
                None => "paper".to_string(),
            },
        };
        let base_cfg = Self::preset(&name)?;
        let mut merged = toml::Table::try_from(&base_cfg)
            .map_err(|e| Error::InvalidConfig(format!("cannot serialise preset: {e}")))?;
        merge(&mut merged, overlay);
        merged.insert("preset".into(), toml::Value::String(name));
        let cfg: RunConfig = toml::Value::Table(merged).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn gains(&self) -> ControllerGains {
        ControllerGains {
            k_t: self.controller.k_t,
            k_r: self.controller.k_r,
            d_star: self.controller.d_star,
            window: self.controller.window,
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.simulation.frequency
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel::new(self.noise.sigma)
    }

    pub fn normalization(&self) -> Normalization {
        Normalization {
            velocity_scale: self.model.velocity_scale,
            position_scale: self.model.position_scale,
            target_velocity_scale: self.model.target_velocity_scale,
        }
    }

    /// Observations fed to the estimator per decision.
    pub fn model_window(&self) -> usize {
        self.controller.window + usize::from(self.model.window_plus_one)
    }

    /// Copy of `self` using the window and input conventions `model` was
    /// trained with. The controller's gate moves with the window.
    pub fn adopt_model(&self, model: &LstmModel) -> Result<Self> {
        let plus = usize::from(self.model.window_plus_one);
        if model.window <= plus {
            return Err(Error::InvalidConfig(format!("model window {} is too short", model.window)));
        }
        let mut c = self.clone();
        c.controller.window = model.window - plus;
        c.model.hidden = model.hidden_size();
        c.model.velocity_scale = model.normalization.velocity_scale;
        c.model.position_scale = model.normalization.position_scale;
        c.model.target_velocity_scale = model.normalization.target_velocity_scale;
        c.noise.raw_noisy_bearing = model.raw_bearing;
        c.validate()?;
        Ok(c)
    }

    pub fn bounds(&self) -> NonholonomicBounds {
        let n = &self.nonholonomic;
        NonholonomicBounds {
            v_min: n.v_min,
            v_max: n.v_max,
            omega_min: n.omega_min,
            omega_max: n.omega_max,
            a_min: n.a_min,
            a_max: n.a_max,
            alpha_min: n.alpha_min,
            alpha_max: n.alpha_max,
        }
    }

    pub fn target_start(&self) -> Vec2 {
        self.simulation.target_start.into()
    }

    pub fn agent_start(&self) -> Vec2 {
        self.simulation.agent_start.into()
    }

    pub fn initial_estimate(&self) -> Vec2 {
        self.simulation.initial_estimate.into()
    }

    pub fn validate(&self) -> Result<()> {
        self.gains().validate()?;
        self.normalization().validate()?;
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.run.seed > i64::MAX as u64 {
            // TOML integers are signed 64-bit; larger seeds would not survive the config echo.
            return bad("run.seed must be below 2^63");
        }
        let s = &self.simulation;
        if !(s.frequency > 0.0 && s.frequency.is_finite()) {
            return bad("simulation.frequency must be positive");
        }
        if s.agent_substeps == 0 {
            return bad("simulation.agent_substeps must be >= 1");
        }
        if !(s.abort_radius > self.controller.d_star) {
            return bad("simulation.abort_radius must exceed d_star");
        }
        if !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return bad("noise.sigma must be >= 0");
        }
        if self.model.hidden == 0 {
            return bad("model.hidden must be >= 1");
        }
        let t = &self.training;
        if t.iterations == 0 {
            return bad("training.iterations must be >= 1");
        }
        if t.samples_per_iteration == 0 || t.batch_size == 0 || t.episode_wave == 0 {
            return bad("training.samples_per_iteration, batch_size and episode_wave must be >= 1");
        }
        if t.episode_steps <= self.model_window() {
            return bad("training.episode_steps must exceed the estimator window");
        }
        if !(t.lr > 0.0 && t.grad_clip > 0.0) {
            return bad("training.lr and training.grad_clip must be positive");
        }
        let mix = [t.mix_constant_velocity, t.mix_circle, t.mix_nonholonomic];
        if mix.iter().any(|w| *w < 0.0 || !w.is_finite()) || mix.iter().sum::<f64>() <= 0.0 {
            return bad("training mix weights must be non-negative with a positive sum");
        }
        if !(t.cv_speed_min <= t.cv_speed_max && t.circle_omega_min <= t.circle_omega_max) {
            return bad("training ranges must satisfy min <= max");
        }
        if !(t.agent_range_min > 0.0 && t.agent_range_min <= t.agent_range_max) {
            return bad("training agent range must satisfy 0 < min <= max");
        }
        if !(0.0..0.5).contains(&t.grid_exclusion) {
            return bad("training.grid_exclusion must be in [0, 0.5)");
        }
        let n = &self.nonholonomic;
        if !(n.v_min <= n.v_max && n.omega_min <= n.omega_max && n.a_min <= n.a_max && n.alpha_min <= n.alpha_max) {
            return bad("nonholonomic bounds must satisfy min <= max");
        }
        if let Some(m) = self.controller.max_speed {
            if !(m > 0.0) {
                return bad("controller.max_speed must be positive");
            }
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
