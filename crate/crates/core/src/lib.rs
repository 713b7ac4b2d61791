//! Finite-length analysis of variable-length stop-feedback (VLSF) codes over
//! common-message discrete memoryless broadcast channels.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: channel models, single-letter information quantities and the
//!   max-min capacity solver.
//! - [`walks`]: increment laws of the information density and first-passage
//!   dynamic programs over them.
//! - [`bounds`]: achievability and converse bounds on log M at a given average
//!   blocklength, and a brute-force converse oracle for tiny instances.
//! - [`asymptotics`]: second-order constants, direction profiles and the normal
//!   approximation.
//! - [`simulator`]: Monte Carlo run of the random-coding threshold scheme.
//! - [`cache`]: content-addressed on-disk store for stopping laws.
//!
//! All logarithms are natural; rates are in nats per channel use.

pub mod asymptotics;
pub mod bounds;
pub mod cache;
pub mod channel;
pub mod quad;
pub mod simulator;
pub mod special;
pub mod walks;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("outside supported scope: {0}")]
    Scope(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("horizon cap of {cap} steps reached with {alive:.3e} transient mass left")]
    HorizonExceeded {
        cap: usize,
        alive: f64,
        partial_cdf: Vec<f64>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed channel file: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
