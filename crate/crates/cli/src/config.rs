//! The JSON run configuration. Every field is optional; command-line
//! flags override file values, and documented defaults fill the rest.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Defaults applied when neither a flag nor the config file sets a value.
pub mod defaults {
    pub const SEED: u64 = 42;
    pub const ROWS: usize = 50_000;
    pub const OUT_DIR: &str = "out";
    pub const TIME_UNIT: &str = "minutes";
    pub const WITH_WEATHER: bool = true;
    pub const MODEL: &str = "gbt";
    pub const TRAIN_FRACTION: f64 = 0.7;
    pub const CV_FOLDS: usize = 5;
    pub const THRESHOLD_MINUTES: f64 = 30.0;
    pub const K_CLUSTERS: usize = 4;
    pub const KNN_K: usize = 7;
    pub const HUBER_DELTA: f64 = 1.0;
    /// Tiny ridge: the default one-hot blocks are exactly collinear with
    /// the intercept, so unpenalized least squares would be singular.
    pub const L2_PENALTY: f64 = 1e-6;
    pub const N_ESTIMATORS: usize = 100;
    pub const MAX_DEPTH: usize = 3;
    pub const LEARNING_RATE: f64 = 0.1;
    pub const MIN_LEAF: usize = 1;
    pub const IMPUTE_RANK: usize = 2;
    pub const IMPUTE_MAX_ITERS: usize = 50;
    pub const IMPUTE_MAX_ROWS: usize = 2_000;
    pub const SEARCH_ITERS: usize = 20;
    pub const SELECT_BY: &str = "mse";
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub rows: Option<usize>,
    pub time_unit: Option<String>,
    pub with_weather: Option<bool>,
    pub weather: Option<PathBuf>,
    pub geo: Option<PathBuf>,
    pub model: Option<String>,
    pub train_fraction: Option<f64>,
    pub cv_folds: Option<usize>,
    pub threshold_minutes: Option<f64>,
    pub k_clusters: Option<usize>,
    pub knn_k: Option<usize>,
    pub huber_delta: Option<f64>,
    pub l2_penalty: Option<f64>,
    pub n_estimators: Option<usize>,
    pub max_depth: Option<usize>,
    pub learning_rate: Option<f64>,
    pub min_leaf: Option<usize>,
    pub impute_rank: Option<usize>,
    pub impute_max_iters: Option<usize>,
    pub impute_max_rows: Option<usize>,
    pub search_iters: Option<usize>,
    pub select_by: Option<String>,
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }
}
