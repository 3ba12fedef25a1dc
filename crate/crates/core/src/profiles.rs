//! Named constant sets for the published experiment settings.

use crate::error::{Error, Result};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub name: &'static str,
    /// Tangential gain (m/s).
    pub k_t: f64,
    /// Radial gain (1/s).
    pub k_r: f64,
    /// Circumnavigation radius (m).
    pub d_star: f64,
    /// Control rate (Hz).
    pub frequency: f64,
    /// Estimator horizon l (steps).
    pub window: usize,
    pub target_start: Vec2,
    pub agent_start: Vec2,
    pub initial_estimate: Vec2,
    pub hidden: usize,
    pub lr: f64,
    pub iterations: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub dataset_size: usize,
}

pub const PAPER: Profile = Profile {
    name: "paper",
    k_t: 60.0,
    k_r: 10.0,
    d_star: 10.0,
    frequency: 50.0,
    window: 60,
    target_start: Vec2::new(0.0, 0.0),
    agent_start: Vec2::new(15.0, 0.0),
    initial_estimate: Vec2::new(5.0, 0.0),
    hidden: 512,
    lr: 0.001,
    iterations: 50,
    epochs: 30,
    batch_size: 64,
    dataset_size: 100_000,
};

/// Gains retrained for targets approaching the agent's tangential speed.
pub const FAST: Profile = Profile {
    name: "fast",
    k_t: 25.0,
    k_r: 4.0,
    ..PAPER
};

pub const ALL: [&Profile; 2] = [&PAPER, &FAST];

pub fn profile(name: &str) -> Result<&'static Profile> {
    ALL.into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownProfile(name.to_string()))
}

/// CRC-32 of the profile's debug rendering; pinned in tests.
pub fn fingerprint(p: &Profile) -> u32 {
    crc32fast::hash(format!("{p:?}").as_bytes())
}
