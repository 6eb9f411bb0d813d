//! Intersection congestion prediction pipeline.
//!
//! The crate covers the full workflow: ingesting trip-logging CSV records
//! (or generating synthetic ones), engineering features, imputing missing
//! street names with low-rank factorization, validating city separation
//! with K-means, training linear / KNN / gradient-boosted regressors, and
//! evaluating them with cross-validation, hyperparameter search, and
//! busy-intersection analyses.

pub mod analysis;
pub mod cluster;
pub mod core_data;
pub mod eval;
pub mod features;
pub mod impute;
pub mod ingest;
pub mod models;

pub use core_data::{CompassHeading, Dataset, TripRecord};
