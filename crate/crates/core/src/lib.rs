//! Cell-free massive MIMO integrated sensing and communication over OTFS:
//! delay-Doppler channel models, closed-form spectral efficiency, sensing
//! SINR, max-min power allocation and the experiment harness.

pub mod allocator;
pub mod channel;
pub mod config;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod geometry;
pub mod lattice;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod ofdm;
pub mod output;
pub mod performance;
pub mod rng;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
