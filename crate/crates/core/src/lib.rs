//! Time-resolved correlation networks for equity markets.
//!
//! Daily adjusted closes are turned into log returns, correlated over rolling
//! or calendar-year windows, thresholded into networks, and summarised with
//! sector-level link-density statistics (merging, self-clustering, index
//! linkage) plus cross-window trend and decline-coincidence tests. A seeded
//! factor-model generator provides markets with known correlation structure.

pub mod cli;
pub mod corrwin;
pub mod error;
pub mod ingest;
pub mod network;
pub mod sectorstats;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
