//! Anomaly detection for noisy periodic activity series.
//!
//! The pipeline slides fixed-length windows over hourly per-individual
//! series, describes each window by wavelet distances to a learned normal
//! period plus descriptive statistics, trains an isolation forest on normal
//! windows only, and evaluates detections per window, per hour and per day.

pub mod attribution;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod iforest;
pub mod ingest;
pub mod model;
pub mod stats;
pub mod synth;
pub mod wavelet;
pub mod windowing;

pub use error::{Error, Result};
