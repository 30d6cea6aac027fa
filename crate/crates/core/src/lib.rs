//! Peak-day and peak-hour probability models for battery dispatch.
//!
//! The crate covers the whole modelling chain:
//!
//! - [`ingest`]: load/weather CSV parsing, nearest-hour alignment, humidity
//! - [`features`]: predictor rows and labels for the peak-day and peak-hour models
//! - [`learners`]: CART, random forest, gradient boosting, logistic regression, MLP
//! - [`augment`]: MLP-based synthetic load generation from weather
//! - [`peak_models`]: monthly peak probabilities, top-2 hour selection, dispatch
//! - [`backtest`]: dispatch replay over held-out years
//! - [`analysis`]: PCA, R², peak-hour histograms
//! - [`pipeline`]: config-driven orchestration with a reproducibility manifest
//!
//! Data-parallel loops (forest fitting, grid search, per-year backtests) run on
//! rayon when the `parallel` feature is enabled and fall back to plain
//! iterators otherwise. Results never depend on the execution mode.

pub mod analysis;
pub mod augment;
pub mod backtest;
pub mod error;
pub mod features;
pub mod ingest;
pub mod learners;
pub mod par;
pub mod peak_models;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
pub use par::Execution;
