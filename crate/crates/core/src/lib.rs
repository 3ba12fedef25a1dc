//! Bearing-only target localisation and circumnavigation with an LSTM target
//! estimator.
//!
//! An agent that can only measure the bearing to a target orbits it at a
//! fixed radius. A many-to-one LSTM turns the last `l` bearings and agent
//! velocities into an estimate of the agent-to-target displacement and the
//! target velocity, which feed a two-phase tangential/radial control law.
//! The estimator is trained on data collected in closed loop, shifting the
//! controller from ground truth to the model's own estimates over the
//! training iterations.
//!
//! Modules, bottom-up:
//! - [`geometry`]: vectors and bearings
//! - [`dynamics`]: target trajectory families and the agent
//! - [`sensing`]: observations and input noise
//! - [`controller`]: the circumnavigation law
//! - [`neural`]: LSTM, BPTT, Adam, weight files
//! - [`training`]: scheduled-sampling data collection and supervised training
//! - [`evaluation`]: trials, error metrics, experiment sweeps
//! - [`profiles`] and [`config`]: published constants and run configuration

pub mod closed_loop;
pub mod config;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod neural;
pub mod profiles;
pub mod rng;
pub mod sensing;
pub mod training;

pub use config::RunConfig;
pub use controller::{ControllerGains, TargetEstimate};
pub use error::{Error, Result};
pub use geometry::{Bearing, Vec2};
pub use neural::LstmModel;
