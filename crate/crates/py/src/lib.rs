//! Python bindings for the congestion-prediction pipeline.
//!
//! Build with `cargo build -p crossflow-py`, then load the resulting
//! `libcrossflow_py.so` as `crossflow_py` (see `python/smoke_test.py`).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use crossflow::analysis::busy_table;
use crossflow::cluster::{cluster_purity, kmeans};
use crossflow::core_data::Dataset;
use crossflow::eval::{regression_metrics, train_test_split};
use crossflow::features::{
    build_feature_matrix, default_feature_spec, default_geo, target_vector, FeatureMatrix,
    TargetMetric, WeatherRow, WeatherTable,
};
use crossflow::ingest::{generate_synthetic, parse_csv, write_csv, SynthConfig, TimeUnit};
use crossflow::models::{
    fit_huber, fit_ols, gbt_feature_importance, gbt_fit, knn_fit, Metric, RegressorArtifact,
    Weighting,
};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_target(name: &str) -> PyResult<TargetMetric> {
    match name {
        "p20" => Ok(TargetMetric::TotalTimeStoppedP20),
        "p40" => Ok(TargetMetric::TotalTimeStoppedP40),
        "p50" => Ok(TargetMetric::TotalTimeStoppedP50),
        "p60" => Ok(TargetMetric::TotalTimeStoppedP60),
        "p80" => Ok(TargetMetric::TotalTimeStoppedP80),
        other => Err(PyValueError::new_err(format!(
            "unknown target `{other}`; expected p20/p40/p50/p60/p80"
        ))),
    }
}

// Mirrors the CLI's built-in (city, month) weather table so feature
// matrices built from Python match the command-line pipeline.
fn synthetic_weather() -> WeatherTable {
    let mut rows = Vec::new();
    for city in 0u8..4 {
        for month in 1u8..=12 {
            let seasonal = (f64::from(month) - 7.0).abs() / 6.0;
            rows.push(WeatherRow {
                city,
                month,
                rain_pct: 20.0 + 30.0 * (1.0 - seasonal) + f64::from(city) * 5.0,
                snow_pct: 40.0 * seasonal * if city == 1 { 1.5 } else { 1.0 },
            });
        }
    }
    WeatherTable { rows }
}

/// A table of intersection trip records.
#[pyclass(name = "Dataset")]
pub struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Deterministic synthetic dataset (same generator as `crossflow synth`).
    #[staticmethod]
    #[pyo3(signature = (rows=50_000, seed=42))]
    fn synthetic(rows: usize, seed: u64) -> PyResult<PyDataset> {
        let config = SynthConfig {
            rows,
            seed,
            ..SynthConfig::default()
        };
        let inner = generate_synthetic(&config).map_err(value_err)?;
        Ok(PyDataset { inner })
    }

    /// Parses a canonical 27-column CSV. Raises on schema errors; rows
    /// that violate range invariants are reported by `validate()`.
    #[staticmethod]
    #[pyo3(signature = (path, time_unit="minutes"))]
    fn read_csv(path: &str, time_unit: &str) -> PyResult<PyDataset> {
        let unit = match time_unit {
            "minutes" => TimeUnit::Minutes,
            "seconds" => TimeUnit::Seconds,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown time unit `{other}`; expected minutes or seconds"
                )))
            }
        };
        let file = std::fs::File::open(path).map_err(value_err)?;
        let parsed = parse_csv(file, unit).map_err(value_err)?;
        Ok(PyDataset {
            inner: parsed.dataset,
        })
    }

    fn write_csv(&self, path: &str) -> PyResult<usize> {
        let file = std::fs::File::create(path).map_err(value_err)?;
        write_csv(&self.inner, file).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Human-readable descriptions of any dataset-level invariant
    /// violations (empty list when clean).
    fn validate(&self) -> Vec<String> {
        self.inner.validate().iter().map(|v| format!("{v:?}")).collect()
    }

    /// Target vector for one stopped-time percentile ("p20".."p80").
    #[pyo3(signature = (metric="p50"))]
    fn target(&self, metric: &str) -> PyResult<Vec<f64>> {
        Ok(target_vector(&self.inner, parse_target(metric)?))
    }

    /// Unique intersections as (id, city, latitude, longitude).
    fn intersections(&self) -> Vec<(u64, u8, f64, f64)> {
        self.inner.intersections()
    }

    /// Busy-intersection counts: (city, hour, busy_count, total) rows for
    /// every (city, hour), where busy means the mean p50 stopped time at
    /// that hour reaches the threshold.
    #[pyo3(signature = (threshold_minutes=30.0))]
    fn busy_counts(&self, threshold_minutes: f64) -> PyResult<Vec<(u8, u8, usize, usize)>> {
        let table = busy_table(&self.inner, threshold_minutes).map_err(value_err)?;
        Ok(table
            .rows
            .iter()
            .map(|r| (r.city, r.hour, r.busy_count, r.total_intersections))
            .collect())
    }
}

/// A fitted design matrix: min-max scaled continuous columns plus one-hot
/// and label encodings, with the transform parameters remembered so new
/// data can be encoded consistently.
#[pyclass(name = "Features")]
pub struct PyFeatures {
    inner: FeatureMatrix,
}

#[pymethods]
impl PyFeatures {
    /// Fits the default feature pipeline on a dataset. `with_weather`
    /// appends (city, month)-joined rain/snow percentages.
    #[staticmethod]
    #[pyo3(signature = (dataset, with_weather=false))]
    fn build(dataset: &PyDataset, with_weather: bool) -> PyResult<PyFeatures> {
        let spec = default_feature_spec(with_weather);
        let inner = build_feature_matrix(
            &dataset.inner,
            &spec,
            &synthetic_weather(),
            &default_geo(),
        )
        .map_err(value_err)?;
        Ok(PyFeatures { inner })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.n_rows, self.inner.n_cols)
    }

    #[getter]
    fn column_names(&self) -> Vec<String> {
        self.inner.column_names().iter().map(|s| s.to_string()).collect()
    }

    /// The matrix as a list of rows.
    fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_rows).map(|i| self.inner.row(i).to_vec()).collect()
    }

    /// Re-encodes another dataset with the already-fitted parameters.
    fn apply(&self, dataset: &PyDataset) -> PyResult<Vec<Vec<f64>>> {
        let applied = self
            .inner
            .apply(&dataset.inner, &synthetic_weather(), &default_geo())
            .map_err(value_err)?;
        Ok((0..applied.n_rows).map(|i| applied.row(i).to_vec()).collect())
    }
}

/// Any of the three regressor families behind one predict/serialize
/// interface.
#[pyclass(name = "Regressor")]
pub struct PyRegressor {
    inner: RegressorArtifact,
}

#[pymethods]
impl PyRegressor {
    /// Ridge (or, with l2=0, ordinary) least squares with intercept.
    #[staticmethod]
    #[pyo3(signature = (x, y, l2_penalty=0.0))]
    fn fit_linear(x: Vec<Vec<f64>>, y: Vec<f64>, l2_penalty: f64) -> PyResult<PyRegressor> {
        let model = fit_ols(&x, &y, l2_penalty).map_err(value_err)?;
        Ok(PyRegressor {
            inner: RegressorArtifact::Linear(model),
        })
    }

    /// Huber-loss linear regression via iteratively reweighted least
    /// squares.
    #[staticmethod]
    #[pyo3(signature = (x, y, delta=1.0, l2_penalty=0.0, max_iters=300, tol=1e-8))]
    fn fit_huber(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        delta: f64,
        l2_penalty: f64,
        max_iters: usize,
        tol: f64,
    ) -> PyResult<PyRegressor> {
        let model = fit_huber(&x, &y, delta, l2_penalty, max_iters, tol).map_err(value_err)?;
        Ok(PyRegressor {
            inner: RegressorArtifact::Linear(model),
        })
    }

    /// Exact k-nearest-neighbors regression (KD-tree backed for up to 16
    /// dimensions).
    #[staticmethod]
    #[pyo3(signature = (x, y, k=7, metric="euclidean", weighting="uniform"))]
    fn fit_knn(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        k: usize,
        metric: &str,
        weighting: &str,
    ) -> PyResult<PyRegressor> {
        let metric = match metric {
            "euclidean" => Metric::Euclidean,
            "manhattan" => Metric::Manhattan,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown metric `{other}`; expected euclidean or manhattan"
                )))
            }
        };
        let weighting = match weighting {
            "uniform" => Weighting::Uniform,
            "inverse_distance" => Weighting::InverseDistance,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown weighting `{other}`; expected uniform or inverse_distance"
                )))
            }
        };
        let model = knn_fit(&x, &y, metric, weighting).map_err(value_err)?;
        Ok(PyRegressor {
            inner: RegressorArtifact::Knn { model, k },
        })
    }

    /// Gradient-boosted regression trees on squared error.
    #[staticmethod]
    #[pyo3(signature = (x, y, n_estimators=100, max_depth=3, learning_rate=0.1, min_leaf=1, seed=0))]
    fn fit_gbt(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        n_estimators: usize,
        max_depth: usize,
        learning_rate: f64,
        min_leaf: usize,
        seed: u64,
    ) -> PyResult<PyRegressor> {
        let model =
            gbt_fit(&x, &y, n_estimators, max_depth, learning_rate, min_leaf, seed).map_err(value_err)?;
        Ok(PyRegressor {
            inner: RegressorArtifact::Gbt(model),
        })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner {
            RegressorArtifact::Linear(_) => "linear",
            RegressorArtifact::Knn { .. } => "knn",
            RegressorArtifact::Gbt(_) => "gbt",
        }
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        x.iter().map(|row| self.inner.predict(row).map_err(value_err)).collect()
    }

    /// Normalized split-gain importances (gradient-boosted trees only).
    fn feature_importance(&self, n_features: usize) -> PyResult<Vec<f64>> {
        match &self.inner {
            RegressorArtifact::Gbt(ensemble) => Ok(gbt_feature_importance(ensemble, n_features)),
            _ => Err(PyValueError::new_err(
                "feature_importance is only defined for gbt models",
            )),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<PyRegressor> {
        Ok(PyRegressor {
            inner: RegressorArtifact::from_json(text).map_err(value_err)?,
        })
    }
}

/// K-means on (latitude, longitude) points; returns a dict with
/// assignments, centroids, inertia, and the iteration count.
#[pyfunction(name = "kmeans")]
#[pyo3(signature = (points, k, seed=0, max_iters=100, tol=1e-9))]
fn py_kmeans(
    py: Python<'_>,
    points: Vec<(f64, f64)>,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> PyResult<PyObject> {
    let result = kmeans(&points, k, max_iters, tol, seed).map_err(value_err)?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("assignments", result.assignments)?;
    dict.set_item("centroids", result.centroids)?;
    dict.set_item("inertia", result.inertia)?;
    dict.set_item("iterations", result.iterations)?;
    Ok(dict.into())
}

/// Fraction of points whose cluster's majority label matches their own.
#[pyfunction(name = "cluster_purity")]
fn py_cluster_purity(assignments: Vec<usize>, labels: Vec<u8>) -> PyResult<f64> {
    cluster_purity(&assignments, &labels).map_err(value_err)
}

/// (mse, mae, max_error) for a prediction vector.
#[pyfunction(name = "regression_metrics")]
fn py_regression_metrics(y_true: Vec<f64>, y_pred: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let m = regression_metrics(&y_true, &y_pred).map_err(value_err)?;
    Ok((m.mse, m.mae, m.max_error))
}

/// Seeded shuffle split of 0..n into (train, test) index lists.
#[pyfunction(name = "train_test_split")]
#[pyo3(signature = (n, fraction=0.7, seed=42))]
fn py_train_test_split(n: usize, fraction: f64, seed: u64) -> PyResult<(Vec<usize>, Vec<usize>)> {
    train_test_split(n, fraction, seed).map_err(value_err)
}

#[pymodule]
fn crossflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFeatures>()?;
    m.add_class::<PyRegressor>()?;
    m.add_function(wrap_pyfunction!(py_kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(py_cluster_purity, m)?)?;
    m.add_function(wrap_pyfunction!(py_regression_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(py_train_test_split, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bindings_round_trip_under_embedded_interpreter() {
        Python::with_gil(|py| {
            let module = PyModule::new(py, "crossflow_py").unwrap();
            crossflow_py(&module).unwrap();

            let dataset = PyDataset::synthetic(300, 7).unwrap();
            assert_eq!(dataset.__len__(), 300);
            assert!(dataset.validate().is_empty());

            let features = PyFeatures::build(&dataset, true).unwrap();
            let (n_rows, n_cols) = features.shape();
            assert_eq!(n_rows, 300);
            assert_eq!(features.column_names().len(), n_cols);

            let x = features.rows();
            let y = dataset.target("p50").unwrap();
            let model = PyRegressor::fit_gbt(x.clone(), y.clone(), 20, 3, 0.1, 1, 0).unwrap();
            let preds = model.predict(x.clone()).unwrap();
            let (mse, mae, max_err) = py_regression_metrics(y.clone(), preds.clone()).unwrap();
            assert!(mse >= 0.0 && mae >= 0.0 && max_err >= 0.0);

            let back = PyRegressor::from_json(&model.to_json().unwrap()).unwrap();
            let again = back.predict(x).unwrap();
            for (a, b) in preds.iter().zip(&again) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        });
    }
}
