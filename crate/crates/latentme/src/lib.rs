//! Regression on latent predictors with split-half measurement-error
//! correction.
//!
//! Latent traits are estimated from indicator sets and standardized to mean 0,
//! variance 1. That identification step interacts with measurement error: the
//! naive OLS slope on estimated scores is attenuated by 1/√(1+σ²_U), a
//! standard errors-in-variables correction over-corrects, and averaging over
//! posterior draws attenuates further. This crate implements the split-half
//! corrected estimator — score two disjoint halves of the indicators, estimate
//! the attenuation factor from their correlation, and rescale the slope —
//! together with naive OLS, uncorrected split-sample IV, and
//! method-of-composition baselines, bootstrap inference, and a Monte Carlo
//! harness for bias/variance/RMSE/coverage comparisons.
//!
//! Modules mirror the pipeline:
//!
//! - [`core`] — standardization, correlation, OLS/2SLS with HC covariance
//! - [`measurement`] — sum score, first principal component, probit IRT by EM
//! - [`partition`] — balanced indicator partitions and split-half scoring
//! - [`correction`] — attenuation factors, corrected estimators, composition
//! - [`bootstrap`] — row/cluster bootstrap for the corrected estimator
//! - [`simulation`] — data-generating process and simulation grid

pub mod bootstrap;
pub mod core;
pub mod correction;
pub mod error;
pub mod measurement;
mod norm;
pub mod partition;
pub mod rng;
pub mod simulation;

pub use crate::core::{Column, HcKind, RegressionFit};
pub use crate::error::{Error, Result, Warning};
pub use crate::measurement::{IndicatorMatrix, LatentScores, Method};
pub use crate::partition::{Partition, PartitionPlan};
