//! The three predictors: L2/Huber linear regression with stepwise
//! selection, KNN regression, and gradient-boosted regression trees. All
//! target the p50 stopped-time in minutes.

mod gbt;
mod knn;
mod linear;
mod stepwise;

pub use gbt::{gbt_feature_importance, gbt_fit, gbt_predict, GbtEnsemble, RegressionTree, TreeNode};
pub use knn::{knn_fit, knn_predict, KnnModel, Metric, Weighting};
pub use linear::{fit_huber, fit_ols, huber_gradient, linear_predict, LinearLoss, LinearModel};
pub use stepwise::{stepwise_select, Criterion, Direction, StepMove, StepwiseResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular design matrix; collinear columns: {columns:?}")]
    Singular { columns: Vec<usize> },
    #[error("need more rows than columns for an unpenalized fit ({rows} rows, {cols} columns)")]
    TooFewRows { rows: usize, cols: usize },
    #[error("k = {k} out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("huber fit did not converge in {iters} iterations")]
    NonConvergence { iters: usize, trace: Vec<f64> },
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("non-finite value in training data")]
    NonFinite,
}

/// Any trained regressor behind one artifact type, for persistence and
/// generic evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorArtifact {
    Linear(LinearModel),
    Knn { model: KnnModel, k: usize },
    Gbt(GbtEnsemble),
}

impl RegressorArtifact {
    pub fn predict(&self, x_row: &[f64]) -> Result<f64, ModelError> {
        match self {
            RegressorArtifact::Linear(m) => linear_predict(m, x_row),
            RegressorArtifact::Knn { model, k } => knn_predict(model, x_row, *k),
            RegressorArtifact::Gbt(m) => gbt_predict(m, x_row),
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<RegressorArtifact> {
        serde_json::from_str(s)
    }
}

pub(crate) fn check_rows(x: &[Vec<f64>], y: &[f64]) -> Result<(), ModelError> {
    if x.is_empty() || y.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if x.len() != y.len() {
        return Err(ModelError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let d = x[0].len();
    for row in x {
        if row.len() != d {
            return Err(ModelError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifact_round_trip_reproduces_predictions() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 1.5 + 2.0 * r[0] - 0.5 * r[1]).collect();

        let artifacts = vec![
            RegressorArtifact::Linear(fit_ols(&x, &y, 0.0).unwrap()),
            RegressorArtifact::Knn {
                model: knn_fit(&x, &y, Metric::Euclidean, Weighting::Uniform).unwrap(),
                k: 3,
            },
            RegressorArtifact::Gbt(gbt_fit(&x, &y, 20, 3, 0.1, 1, 0).unwrap()),
        ];
        for artifact in artifacts {
            let json = artifact.to_json().unwrap();
            let back = RegressorArtifact::from_json(&json).unwrap();
            for row in &x {
                let a = artifact.predict(row).unwrap();
                let b = back.predict(row).unwrap();
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
