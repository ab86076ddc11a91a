//! Fraud detection for health-insurance claims with two models: a Markov
//! chain over quantile-binned claim features with per-state fraud
//! probabilities, and gradient-boosted regression trees minimizing Bernoulli
//! deviance. Includes a synthetic claims generator and ROC/AUC evaluation.

pub mod config;
pub mod data;
pub mod discretize;
pub mod error;
pub mod eval;
pub mod gbm;
pub mod markov;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
