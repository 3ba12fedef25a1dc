use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulation, estimation and training stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bearing undefined: target and agent are {separation:e} m apart")]
    CoincidentPositions { separation: f64 },

    #[error("perturbed bearing has norm {norm:e}, cannot renormalise")]
    DegenerateBearing { norm: f64 },

    #[error("non-finite control command ({x}, {y})")]
    NonFiniteCommand { x: f64, y: f64 },

    #[error("controller past its gate at step {step} but no estimate was supplied")]
    MissingEstimate { step: usize },

    #[error("target estimate contains non-finite values")]
    NonFiniteEstimate,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("window has {got} observations, model expects {expected}")]
    WrongWindowLength { expected: usize, got: usize },

    #[error("weight file version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("weight file checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("not a weight file: bad magic bytes")]
    BadMagic,

    #[error("non-finite training loss at iteration {iteration}, epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        iteration: usize,
        epoch: usize,
        batch: usize,
    },

    #[error("run diverged at step {step}: range {range:.1} m exceeds the abort radius")]
    Diverged { step: usize, range: f64 },

    #[error("trial of {steps} steps is shorter than the {needed}-step averaging window")]
    TrialTooShort { steps: usize, needed: usize },

    #[error("unknown profile `{0}`")]
    UnknownProfile(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("missing estimation model(s) for noise levels: {}", .0.join(", "))]
    MissingModel(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
