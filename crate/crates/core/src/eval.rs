//! Metrics, data splits, cross-validation, hyperparameter search, and
//! linear-model diagnostics (Durbin-Watson, correlation matrix, AIC/BIC).

use crate::models::{ModelError, RegressorArtifact};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("model error on fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: ModelError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub mse: f64,
    pub mae: f64,
    pub max_error: f64,
}

/// mse = mean squared error, mae = mean absolute error, max_error = the
/// largest absolute residual.
pub fn regression_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<MetricTriple, EvalError> {
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let n = y_true.len() as f64;
    let mut sq = 0.0;
    let mut ab = 0.0;
    let mut mx: f64 = 0.0;
    for (t, p) in y_true.iter().zip(y_pred) {
        let r = (t - p).abs();
        sq += r * r;
        ab += r;
        mx = mx.max(r);
    }
    Ok(MetricTriple {
        mse: sq / n,
        mae: ab / n,
        max_error: mx,
    })
}

/// Seeded shuffle of 0..n, split at floor(n * train_fraction).
pub fn train_test_split(
    n: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if n < 2 {
        return Err(EvalError::Degenerate(format!("need at least 2 rows, got {n}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::BadParam(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let cut = (n as f64 * train_fraction).floor() as usize;
    let test = indices.split_off(cut);
    Ok((indices, test))
}

/// Seeded shuffle of 0..n dealt into k folds with sizes differing by at
/// most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 || k > n {
        return Err(EvalError::BadParam(format!("k = {k} out of range 2..={n}")));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(indices[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<MetricTriple>,
    pub mean: MetricTriple,
}

fn mean_triple(folds: &[MetricTriple]) -> MetricTriple {
    let n = folds.len() as f64;
    MetricTriple {
        mse: folds.iter().map(|m| m.mse).sum::<f64>() / n,
        mae: folds.iter().map(|m| m.mae).sum::<f64>() / n,
        max_error: folds.iter().map(|m| m.max_error).sum::<f64>() / n,
    }
}

fn gather(x: &[Vec<f64>], y: &[f64], idx: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
    (
        idx.iter().map(|&i| x[i].clone()).collect(),
        idx.iter().map(|&i| y[i]).collect(),
    )
}

/// k-fold CV: fit on each fold's complement, score on the fold, then
/// average each metric arithmetically over folds.
pub fn cross_validate<F>(
    fit: F,
    x: &[Vec<f64>],
    y: &[f64],
    k: usize,
    seed: u64,
) -> Result<CvResult, EvalError>
where
    F: Fn(&[Vec<f64>], &[f64]) -> Result<RegressorArtifact, ModelError>,
{
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    let folds = kfold_split(y.len(), k, seed)?;
    let mut results = Vec::with_capacity(k);
    for (fold_idx, fold) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != fold_idx)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let (train_x, train_y) = gather(x, y, &train_idx);
        let (test_x, test_y) = gather(x, y, fold);
        let model = fit(&train_x, &train_y).map_err(|source| EvalError::Fold {
            fold: fold_idx,
            source,
        })?;
        let preds: Result<Vec<f64>, ModelError> =
            test_x.iter().map(|row| model.predict(row)).collect();
        let preds = preds.map_err(|source| EvalError::Fold {
            fold: fold_idx,
            source,
        })?;
        results.push(regression_metrics(&test_y, &preds)?);
    }
    let mean = mean_triple(&results);
    Ok(CvResult {
        folds: results,
        mean,
    })
}

/// One hyperparameter value; integers and floats are kept distinct so the
/// manifest echoes what was actually searched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Str(v) => write!(f, "{v}"),
        }
    }
}

pub type ParamSet = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub params: ParamSet,
    pub folds: Vec<MetricTriple>,
    pub mean: MetricTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_params: ParamSet,
    pub best_score: f64,
    pub trials: Vec<Trial>,
}

/// Which mean-CV metric a search minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectBy {
    Mse,
    Mae,
}

fn score_of(mean: &MetricTriple, select_by: SelectBy) -> f64 {
    match select_by {
        SelectBy::Mse => mean.mse,
        SelectBy::Mae => mean.mae,
    }
}

fn run_trials<F>(
    param_sets: Vec<ParamSet>,
    fit: F,
    x: &[Vec<f64>],
    y: &[f64],
    k: usize,
    seed: u64,
    select_by: SelectBy,
) -> Result<SearchResult, EvalError>
where
    F: Fn(&ParamSet, &[Vec<f64>], &[f64]) -> Result<RegressorArtifact, ModelError>,
{
    let mut trials = Vec::with_capacity(param_sets.len());
    for params in param_sets {
        let cv = cross_validate(
            |tx, ty| fit(&params, tx, ty),
            x,
            y,
            k,
            seed,
        )?;
        trials.push(Trial {
            params,
            folds: cv.folds,
            mean: cv.mean,
        });
    }
    // Ties keep the earliest trial in the deterministic evaluation order.
    let best = trials
        .iter()
        .min_by(|a, b| {
            score_of(&a.mean, select_by)
                .partial_cmp(&score_of(&b.mean, select_by))
                .unwrap()
        })
        .ok_or(EvalError::Empty)?;
    Ok(SearchResult {
        best_params: best.params.clone(),
        best_score: score_of(&best.mean, select_by),
        trials,
    })
}

/// Full Cartesian product of the grid, evaluated in lexicographic order of
/// the given dimensions (first dimension varies slowest).
pub fn grid_search<F>(
    param_grid: &[(String, Vec<ParamValue>)],
    fit: F,
    x: &[Vec<f64>],
    y: &[f64],
    k: usize,
    seed: u64,
    select_by: SelectBy,
) -> Result<SearchResult, EvalError>
where
    F: Fn(&ParamSet, &[Vec<f64>], &[f64]) -> Result<RegressorArtifact, ModelError>,
{
    if param_grid.is_empty() || param_grid.iter().any(|(_, vals)| vals.is_empty()) {
        return Err(EvalError::BadParam("empty parameter grid".to_string()));
    }
    let mut sets = vec![ParamSet::new()];
    for (name, values) in param_grid {
        let mut next = Vec::with_capacity(sets.len() * values.len());
        for base in &sets {
            for value in values {
                let mut s = base.clone();
                s.insert(name.clone(), value.clone());
                next.push(s);
            }
        }
        sets = next;
    }
    run_trials(sets, fit, x, y, k, seed, select_by)
}

/// One sampled dimension of a random-search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamDim {
    /// Uniform pick from an explicit set.
    Choice { values: Vec<ParamValue> },
    /// Uniform (or log-uniform) float in [lo, hi].
    Range { lo: f64, hi: f64, log: bool },
    /// Uniform integer in [lo, hi].
    IntRange { lo: i64, hi: i64 },
}

/// n_iter independent seeded draws over the space; duplicates allowed.
pub fn random_search<F>(
    param_space: &[(String, ParamDim)],
    n_iter: usize,
    fit: F,
    x: &[Vec<f64>],
    y: &[f64],
    k: usize,
    seed: u64,
    select_by: SelectBy,
) -> Result<SearchResult, EvalError>
where
    F: Fn(&ParamSet, &[Vec<f64>], &[f64]) -> Result<RegressorArtifact, ModelError>,
{
    if param_space.is_empty() {
        return Err(EvalError::BadParam("empty parameter space".to_string()));
    }
    if n_iter == 0 {
        return Err(EvalError::BadParam("n_iter must be at least 1".to_string()));
    }
    for (name, dim) in param_space {
        let ok = match dim {
            ParamDim::Choice { values } => !values.is_empty(),
            ParamDim::Range { lo, hi, log } => lo <= hi && (!log || *lo > 0.0),
            ParamDim::IntRange { lo, hi } => lo <= hi,
        };
        if !ok {
            return Err(EvalError::BadParam(format!("invalid dimension {name:?}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets = Vec::with_capacity(n_iter);
    for _ in 0..n_iter {
        let mut s = ParamSet::new();
        for (name, dim) in param_space {
            let value = match dim {
                ParamDim::Choice { values } => {
                    values[rng.random_range(0..values.len())].clone()
                }
                ParamDim::Range { lo, hi, log } => {
                    if *log {
                        ParamValue::Float((rng.random_range(lo.ln()..=hi.ln())).exp())
                    } else {
                        ParamValue::Float(rng.random_range(*lo..=*hi))
                    }
                }
                ParamDim::IntRange { lo, hi } => ParamValue::Int(rng.random_range(*lo..=*hi)),
            };
            s.insert(name.clone(), value);
        }
        sets.push(s);
    }
    run_trials(sets, fit, x, y, k, seed, select_by)
}

/// Durbin-Watson statistic: sum of squared successive residual
/// differences over the residual sum of squares. Near 2 means little
/// first-order autocorrelation.
pub fn durbin_watson(residuals: &[f64]) -> Result<f64, EvalError> {
    if residuals.len() < 2 {
        return Err(EvalError::Degenerate("need at least 2 residuals".to_string()));
    }
    let denom: f64 = residuals.iter().map(|e| e * e).sum();
    if denom == 0.0 {
        return Err(EvalError::Degenerate("all residuals are zero".to_string()));
    }
    let num: f64 = residuals
        .windows(2)
        .map(|w| (w[1] - w[0]) * (w[1] - w[0]))
        .sum();
    Ok(num / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// Symmetric Pearson matrix with unit diagonal.
    pub matrix: Vec<Vec<f64>>,
    /// Pairs (i, j, r) with i < j and |r| above the threshold.
    pub flagged: Vec<(usize, usize, f64)>,
    /// Columns with zero variance; their correlations are reported as 0.
    pub zero_variance: Vec<usize>,
    pub threshold: f64,
}

/// Pearson correlations between columns of a row-major matrix. Constant
/// columns get r = 0 against everything and are listed separately.
pub fn correlation_matrix(x: &[Vec<f64>], threshold: f64) -> Result<CorrelationReport, EvalError> {
    if x.len() < 2 {
        return Err(EvalError::Degenerate("need at least 2 rows".to_string()));
    }
    let n = x.len() as f64;
    let d = x[0].len();
    let means: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let sds: Vec<f64> = (0..d)
        .map(|j| {
            (x.iter().map(|r| (r[j] - means[j]) * (r[j] - means[j])).sum::<f64>() / n).sqrt()
        })
        .collect();
    let zero_variance: Vec<usize> = (0..d).filter(|&j| sds[j] == 0.0).collect();
    let mut matrix = vec![vec![0.0; d]; d];
    let mut flagged = Vec::new();
    for i in 0..d {
        matrix[i][i] = 1.0;
        for j in i + 1..d {
            let r = if sds[i] == 0.0 || sds[j] == 0.0 {
                0.0
            } else {
                let cov = x
                    .iter()
                    .map(|row| (row[i] - means[i]) * (row[j] - means[j]))
                    .sum::<f64>()
                    / n;
                (cov / (sds[i] * sds[j])).clamp(-1.0, 1.0)
            };
            matrix[i][j] = r;
            matrix[j][i] = r;
            if r.abs() > threshold {
                flagged.push((i, j, r));
            }
        }
    }
    Ok(CorrelationReport {
        matrix,
        flagged,
        zero_variance,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AicBic {
    pub aic: f64,
    pub bic: f64,
    /// Set when rss = 0; aic and bic are then -inf sentinels.
    pub perfect_fit: bool,
}

/// Gaussian-likelihood information criteria; num_params counts the
/// coefficients plus the intercept.
pub fn aic_bic(n: usize, num_params: usize, rss: f64) -> AicBic {
    if rss <= 0.0 {
        return AicBic {
            aic: f64::NEG_INFINITY,
            bic: f64::NEG_INFINITY,
            perfect_fit: true,
        };
    }
    let nf = n as f64;
    let kf = num_params as f64;
    let base = nf * (rss / nf).ln();
    AicBic {
        aic: base + 2.0 * kf,
        bic: base + kf * nf.ln(),
        perfect_fit: false,
    }
}

/// A named table of configurations scored by (MSE, MAE, Max Error), plus
/// a label for whether the numbers come from CV means or a held-out split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub title: String,
    /// "cv-mean" or "holdout".
    pub mode: String,
    pub rows: Vec<(String, MetricTriple)>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("configuration,mse,mae,max_error\n");
        for (name, m) in &self.rows {
            out.push_str(&format!("{name},{},{},{}\n", m.mse, m.mae, m.max_error));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fit_ols, knn_fit, Metric, Weighting};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn metric_examples() {
        let m = regression_metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((m.mse, m.mae, m.max_error), (0.0, 0.0, 0.0));
        let m = regression_metrics(&[1.0, 3.0], &[2.0, 2.0]).unwrap();
        assert_eq!((m.mse, m.mae, m.max_error), (1.0, 1.0, 1.0));
        let m = regression_metrics(&[0.0, 0.0, 0.0], &[3.0, 0.0, 0.0]).unwrap();
        assert_eq!((m.mse, m.mae, m.max_error), (3.0, 1.0, 3.0));
    }

    #[test]
    fn metrics_reject_bad_shapes() {
        assert!(regression_metrics(&[], &[]).is_err());
        assert!(regression_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let (train, test) = train_test_split(10, 0.7, 3).unwrap();
        assert_eq!((train.len(), test.len()), (7, 3));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let again = train_test_split(10, 0.7, 3).unwrap();
        assert_eq!((train, test), again);
    }

    #[test]
    fn kfold_sizes() {
        let folds = kfold_split(10, 5, 1).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        let folds = kfold_split(7, 5, 1).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 1, 1, 2, 2]);
        let mut all: Vec<usize> = folds.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
        assert!(kfold_split(5, 1, 0).is_err());
        assert!(kfold_split(5, 6, 0).is_err());
    }

    #[test]
    fn cv_on_exact_linear_data_is_near_zero() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64, (i % 5) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 + 2.0 * r[0] - r[1]).collect();
        let cv = cross_validate(
            |tx, ty| fit_ols(tx, ty, 0.0).map(crate::models::RegressorArtifact::Linear),
            &x,
            &y,
            5,
            7,
        )
        .unwrap();
        assert!(cv.mean.mse < 1e-16, "mse {}", cv.mean.mse);
        // Mean equals the hand-computed mean of fold MSEs.
        let hand: f64 = cv.folds.iter().map(|m| m.mse).sum::<f64>() / 5.0;
        assert_eq!(cv.mean.mse, hand);
    }

    #[test]
    fn cv_errors_carry_the_fold_index() {
        // 2 columns, 6 rows, 3 folds: each training complement has 4 rows,
        // but the duplicated column makes every fit singular.
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let err = cross_validate(
            |tx, ty| fit_ols(tx, ty, 0.0).map(crate::models::RegressorArtifact::Linear),
            &x,
            &y,
            3,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::Fold { fold: 0, .. }), "{err}");
    }

    fn knn_factory(
        params: &ParamSet,
        tx: &[Vec<f64>],
        ty: &[f64],
    ) -> Result<RegressorArtifact, ModelError> {
        let k = match params["k"] {
            ParamValue::Int(v) => v as usize,
            _ => unreachable!(),
        };
        Ok(RegressorArtifact::Knn {
            model: knn_fit(tx, ty, Metric::Euclidean, Weighting::Uniform)?,
            k,
        })
    }

    fn wavy_data(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| (r[0] * 1.3).sin() + 0.5 * r[1] + rng.random_range(-0.05..0.05))
            .collect();
        (x, y)
    }

    #[test]
    fn grid_search_matches_exhaustive_oracle() {
        let (x, y) = wavy_data(120);
        let ks: Vec<ParamValue> = (1..=15).map(ParamValue::Int).collect();
        let grid = vec![("k".to_string(), ks)];
        let result =
            grid_search(&grid, knn_factory, &x, &y, 5, 21, SelectBy::Mse).unwrap();
        assert_eq!(result.trials.len(), 15);

        // Independent rerun of every k through cross_validate.
        let mut best_k = 0;
        let mut best = f64::INFINITY;
        for k in 1..=15usize {
            let cv = cross_validate(
                |tx, ty| {
                    Ok(RegressorArtifact::Knn {
                        model: knn_fit(tx, ty, Metric::Euclidean, Weighting::Uniform)?,
                        k,
                    })
                },
                &x,
                &y,
                5,
                21,
            )
            .unwrap();
            if cv.mean.mse < best {
                best = cv.mean.mse;
                best_k = k;
            }
        }
        assert_eq!(result.best_params["k"], ParamValue::Int(best_k as i64));
        assert_eq!(result.best_score, best);
        // Internal consistency: best equals the min over its own trials.
        let min_trial = result
            .trials
            .iter()
            .map(|t| t.mean.mse)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(result.best_score, min_trial);
    }

    #[test]
    fn grid_search_trial_count_is_the_product_of_dimensions() {
        let (x, y) = wavy_data(40);
        let grid = vec![
            (
                "k".to_string(),
                vec![ParamValue::Int(1), ParamValue::Int(3)],
            ),
            (
                "unused".to_string(),
                vec![
                    ParamValue::Str("a".to_string()),
                    ParamValue::Str("b".to_string()),
                    ParamValue::Str("c".to_string()),
                ],
            ),
        ];
        let result = grid_search(&grid, knn_factory, &x, &y, 4, 0, SelectBy::Mse).unwrap();
        assert_eq!(result.trials.len(), 6);
        // Lexicographic order: first dimension varies slowest.
        assert_eq!(result.trials[0].params["k"], ParamValue::Int(1));
        assert_eq!(result.trials[2].params["k"], ParamValue::Int(1));
        assert_eq!(result.trials[3].params["k"], ParamValue::Int(3));
    }

    #[test]
    fn random_search_is_deterministic_and_close_to_grid() {
        let (x, y) = wavy_data(100);
        let space = vec![("k".to_string(), ParamDim::IntRange { lo: 1, hi: 10 })];
        let a = random_search(&space, 40, knn_factory, &x, &y, 5, 9, SelectBy::Mse).unwrap();
        let b = random_search(&space, 40, knn_factory, &x, &y, 5, 9, SelectBy::Mse).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials.len(), 40);

        let ks: Vec<ParamValue> = (1..=10).map(ParamValue::Int).collect();
        let grid = grid_search(
            &[("k".to_string(), ks)],
            knn_factory,
            &x,
            &y,
            5,
            9,
            SelectBy::Mse,
        )
        .unwrap();
        assert!(a.best_score <= grid.best_score * 1.05 + 1e-12);
    }

    #[test]
    fn random_search_single_iteration_has_one_trial() {
        let (x, y) = wavy_data(30);
        let space = vec![("k".to_string(), ParamDim::Choice {
            values: vec![ParamValue::Int(3)],
        })];
        let r = random_search(&space, 1, knn_factory, &x, &y, 3, 0, SelectBy::Mae).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.best_params["k"], ParamValue::Int(3));
    }

    #[test]
    fn durbin_watson_examples() {
        assert_eq!(durbin_watson(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(durbin_watson(&[1.0, -1.0, 1.0, -1.0]).unwrap(), 3.0);
        assert!(durbin_watson(&[0.0, 0.0]).is_err());
        assert!(durbin_watson(&[1.0]).is_err());
    }

    #[test]
    fn durbin_watson_white_noise_near_two_and_reversal_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let e: Vec<f64> = (0..10_000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dw = durbin_watson(&e).unwrap();
        assert!((dw - 2.0).abs() < 0.2, "dw = {dw}");
        // Reversal preserves DW up to summation-order rounding.
        let rev: Vec<f64> = e.iter().rev().copied().collect();
        assert!((durbin_watson(&rev).unwrap() - dw).abs() < 1e-12);
    }

    #[test]
    fn correlation_matrix_flags_and_constants() {
        let x: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let v = i as f64;
                vec![v, -v, 7.0, v]
            })
            .collect();
        let rep = correlation_matrix(&x, 0.9).unwrap();
        assert_eq!(rep.matrix[0][0], 1.0);
        assert_eq!(rep.matrix[0][1], -1.0);
        assert_eq!(rep.matrix[0][2], 0.0);
        assert_eq!(rep.zero_variance, vec![2]);
        // Duplicated column flagged at r = 1.0.
        assert!(rep.flagged.contains(&(0, 3, 1.0)));
        assert!(rep.flagged.contains(&(0, 1, -1.0)));
    }

    #[test]
    fn aic_bic_values_and_laws() {
        let ab = aic_bic(100, 3, 100.0);
        assert!((ab.aic - 6.0).abs() < 1e-12);
        assert!(!ab.perfect_fit);
        // BIC − AIC = k (ln n − 2).
        assert!((ab.bic - ab.aic - 3.0 * (100f64.ln() - 2.0)).abs() < 1e-12);
        // Monotone in rss.
        let smaller = aic_bic(100, 3, 50.0);
        assert!(smaller.aic < ab.aic && smaller.bic < ab.bic);
        let perfect = aic_bic(100, 3, 0.0);
        assert!(perfect.perfect_fit);
        assert_eq!(perfect.aic, f64::NEG_INFINITY);
    }

    #[test]
    fn eval_report_csv_layout() {
        let report = EvalReport {
            title: "linear family".to_string(),
            mode: "cv-mean".to_string(),
            rows: vec![(
                "l2".to_string(),
                MetricTriple {
                    mse: 1.5,
                    mae: 1.0,
                    max_error: 2.0,
                },
            )],
        };
        assert_eq!(
            report.to_csv(),
            "configuration,mse,mae,max_error\nl2,1.5,1,2\n"
        );
    }
}
