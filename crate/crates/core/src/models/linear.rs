//! Multiple linear regression with L2 or Huber loss. OLS/ridge solves use
//! an orthogonal decomposition; Huber uses iteratively reweighted least
//! squares on top of the same kernel.

use super::{check_rows, ModelError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearLoss {
    L2,
    Huber { delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub loss: LinearLoss,
    pub l2_penalty: f64,
    pub selected_features: Vec<String>,
}

/// Weighted ridge solve: minimizes sum_i w_i r_i^2 + lambda |beta|^2 with
/// an unpenalized intercept. `lambda` here multiplies |beta|^2 directly,
/// matching the (X'WX + lambda I)^-1 X'W y closed form.
fn solve_weighted(
    x: &[Vec<f64>],
    y: &[f64],
    weights: Option<&[f64]>,
    lambda: f64,
) -> Result<(f64, Vec<f64>), ModelError> {
    let n = x.len();
    let d = x[0].len();
    let p = d + 1; // intercept first
    // Augmented rows sqrt(lambda) e_j implement the ridge penalty inside
    // the same QR solve; the intercept row is omitted so it stays
    // unpenalized.
    let extra = if lambda > 0.0 { d } else { 0 };
    let mut a = DMatrix::<f64>::zeros(n + extra, p);
    let mut b = DVector::<f64>::zeros(n + extra);
    for i in 0..n {
        let w = weights.map(|w| w[i]).unwrap_or(1.0).sqrt();
        a[(i, 0)] = w;
        for j in 0..d {
            a[(i, j + 1)] = w * x[i][j];
        }
        b[i] = w * y[i];
    }
    if lambda > 0.0 {
        let s = lambda.sqrt();
        for j in 0..d {
            a[(n + j, j + 1)] = s;
        }
    }
    let qr = a.col_piv_qr();
    // Rank check on the R diagonal catches collinear columns when
    // lambda = 0.
    let r = qr.r();
    let scale = r
        .diagonal()
        .iter()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let mut deficient = Vec::new();
    // Pivoted column j of R corresponds to original column idx[j]: apply
    // the recorded column swaps to an index vector.
    let mut idx = DVector::from_iterator(p, (0..p).map(|i| i as f64));
    qr.p().permute_rows(&mut idx);
    for j in 0..p {
        if r[(j, j)].abs() < 1e-10 * scale {
            let original = idx[j] as usize;
            if original >= 1 {
                deficient.push(original - 1);
            }
        }
    }
    if !deficient.is_empty() {
        deficient.sort_unstable();
        return Err(ModelError::Singular { columns: deficient });
    }
    // Least-squares solve via the thin factorization: R z = Q^T b, then
    // undo the column pivoting.
    let mut z = qr.q().transpose() * &b;
    if !r.solve_upper_triangular_mut(&mut z) {
        return Err(ModelError::Singular { columns: vec![] });
    }
    qr.p().inv_permute_rows(&mut z);
    Ok((z[0], z.iter().skip(1).copied().collect()))
}

/// Least squares / ridge fit: minimizes sum (y - b0 - x.b)^2 + lambda |b|^2.
pub fn fit_ols(x: &[Vec<f64>], y: &[f64], l2_penalty: f64) -> Result<LinearModel, ModelError> {
    check_rows(x, y)?;
    if l2_penalty < 0.0 {
        return Err(ModelError::BadParam("l2_penalty must be >= 0".to_string()));
    }
    let (rows, cols) = (x.len(), x[0].len());
    if l2_penalty == 0.0 && rows <= cols {
        return Err(ModelError::TooFewRows { rows, cols });
    }
    let (intercept, coefficients) = solve_weighted(x, y, None, l2_penalty)?;
    Ok(LinearModel {
        intercept,
        coefficients,
        loss: LinearLoss::L2,
        l2_penalty,
        selected_features: Vec::new(),
    })
}

/// Gradient of the Huber objective sum rho_delta(r) + lambda |beta|^2 with
/// respect to (intercept, beta).
pub fn huber_gradient(
    x: &[Vec<f64>],
    y: &[f64],
    model: &LinearModel,
    delta: f64,
) -> Vec<f64> {
    let d = model.coefficients.len();
    let mut grad = vec![0.0; d + 1];
    for (xi, yi) in x.iter().zip(y) {
        let pred = model.intercept
            + xi.iter()
                .zip(&model.coefficients)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        let r = yi - pred;
        let psi = if r.abs() <= delta {
            r
        } else {
            delta * r.signum()
        };
        grad[0] -= psi;
        for j in 0..d {
            grad[j + 1] -= psi * xi[j];
        }
    }
    for j in 0..d {
        grad[j + 1] += 2.0 * model.l2_penalty * model.coefficients[j];
    }
    grad
}

/// Robust fit minimizing sum rho_delta(y - yhat) + lambda |beta|^2 by IRLS
/// with weights min(1, delta/|r|). Converged when the coefficient change
/// drops below `tol`.
pub fn fit_huber(
    x: &[Vec<f64>],
    y: &[f64],
    delta: f64,
    l2_penalty: f64,
    max_iters: usize,
    tol: f64,
) -> Result<LinearModel, ModelError> {
    check_rows(x, y)?;
    if delta <= 0.0 {
        return Err(ModelError::BadParam("delta must be positive".to_string()));
    }
    if l2_penalty < 0.0 {
        return Err(ModelError::BadParam("l2_penalty must be >= 0".to_string()));
    }
    // rho uses the r^2/2 convention, so the equivalent weighted problem is
    // sum w r^2 / 2 + lambda|b|^2, i.e. effective ridge 2*lambda in the
    // w r^2 form.
    let effective_lambda = 2.0 * l2_penalty;
    let (mut intercept, mut beta) = solve_weighted(x, y, None, effective_lambda)?;
    let mut trace = Vec::new();
    for _ in 0..max_iters {
        let weights: Vec<f64> = x
            .iter()
            .zip(y)
            .map(|(xi, yi)| {
                let pred = intercept
                    + xi.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
                let r = (yi - pred).abs();
                if r <= delta {
                    1.0
                } else {
                    delta / r
                }
            })
            .collect();
        let (new_intercept, new_beta) = solve_weighted(x, y, Some(&weights), effective_lambda)?;
        let change = (new_intercept - intercept)
            .abs()
            .max(
                new_beta
                    .iter()
                    .zip(&beta)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max),
            );
        intercept = new_intercept;
        beta = new_beta;
        trace.push(change);
        if change < tol {
            return Ok(LinearModel {
                intercept,
                coefficients: beta,
                loss: LinearLoss::Huber { delta },
                l2_penalty,
                selected_features: Vec::new(),
            });
        }
    }
    Err(ModelError::NonConvergence {
        iters: max_iters,
        trace,
    })
}

/// b0 + x.b; constant cost in training-set size.
pub fn linear_predict(model: &LinearModel, x_row: &[f64]) -> Result<f64, ModelError> {
    if x_row.len() != model.coefficients.len() {
        return Err(ModelError::DimensionMismatch {
            expected: model.coefficients.len(),
            got: x_row.len(),
        });
    }
    Ok(model.intercept
        + x_row
            .iter()
            .zip(&model.coefficients)
            .map(|(a, b)| a * b)
            .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_linear_data_is_recovered() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 + 2.0 * r[0]).collect();
        let m = fit_ols(&x, &y, 0.0).unwrap();
        assert_relative_eq!(m.intercept, 3.0, epsilon = 1e-10);
        assert_relative_eq!(m.coefficients[0], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn duplicate_column_is_singular() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        match fit_ols(&x, &y, 0.0) {
            Err(ModelError::Singular { columns }) => assert!(!columns.is_empty()),
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn ridge_matches_closed_form_and_shrinks() {
        // y = 2x without intercept structure; compare against
        // (X'X + lambda I)^-1 X'y with the intercept column unpenalized.
        let x: Vec<Vec<f64>> = (1..=20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0]).collect();
        let mut prev_slope = f64::INFINITY;
        for lambda in [0.0, 1.0, 100.0, 10_000.0, 1_000_000.0] {
            let m = fit_ols(&x, &y, lambda).unwrap();
            // Closed form with intercept column: solve 2x2 normal equations.
            let n = x.len() as f64;
            let sx: f64 = x.iter().map(|r| r[0]).sum();
            let sxx: f64 = x.iter().map(|r| r[0] * r[0]).sum();
            let sy: f64 = y.iter().sum();
            let sxy: f64 = x.iter().zip(&y).map(|(r, yi)| r[0] * yi).sum();
            let det = n * (sxx + lambda) - sx * sx;
            let slope = (n * sxy - sx * sy) / det;
            assert_relative_eq!(m.coefficients[0], slope, epsilon = 1e-8);
            assert!(m.coefficients[0] < prev_slope);
            prev_slope = m.coefficients[0];
        }
        assert!(prev_slope < 0.1);
    }

    #[test]
    fn too_few_rows_is_rejected_without_penalty() {
        let x = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let y = vec![1.0, 2.0];
        assert!(matches!(
            fit_ols(&x, &y, 0.0),
            Err(ModelError::TooFewRows { .. })
        ));
        assert!(fit_ols(&x, &y, 0.1).is_ok());
    }

    #[test]
    fn huber_matches_ols_on_clean_data() {
        let x: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64, (i * i % 5) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 1.0 + 0.5 * r[0] - 2.0 * r[1]).collect();
        let ols = fit_ols(&x, &y, 0.0).unwrap();
        let huber = fit_huber(&x, &y, 1.0, 0.0, 200, 1e-12).unwrap();
        assert_relative_eq!(huber.intercept, ols.intercept, epsilon = 1e-8);
        for (a, b) in huber.coefficients.iter().zip(&ols.coefficients) {
            assert_relative_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn huge_delta_reduces_to_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| 2.0 + r[0] - r[1] + rng.random_range(-0.5..0.5))
            .collect();
        let ols = fit_ols(&x, &y, 0.0).unwrap();
        let huber = fit_huber(&x, &y, 1e9, 0.0, 100, 1e-12).unwrap();
        assert_relative_eq!(huber.intercept, ols.intercept, epsilon = 1e-6);
        for (a, b) in huber.coefficients.iter().zip(&ols.coefficients) {
            assert_relative_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn huber_resists_gross_outlier() {
        let mut x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let mut y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        x.push(vec![10.0]);
        y.push(500.0); // gross outlier
        let ols = fit_ols(&x, &y, 0.0).unwrap();
        let huber = fit_huber(&x, &y, 1.0, 0.0, 500, 1e-12).unwrap();
        assert!(
            (huber.coefficients[0] - 1.0).abs() < (ols.coefficients[0] - 1.0).abs(),
            "huber {} ols {}",
            huber.coefficients[0],
            ols.coefficients[0]
        );
    }

    #[test]
    fn huber_gradient_vanishes_at_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let mut y: Vec<f64> = x
            .iter()
            .map(|r| 1.0 + 3.0 * r[0] - r[1] + rng.random_range(-0.2..0.2))
            .collect();
        // Inject outliers so both Huber regimes are active.
        for i in 0..5 {
            x.push(vec![i as f64 * 0.3, 1.0]);
            y.push(80.0 + i as f64);
        }
        let m = fit_huber(&x, &y, 1.0, 0.01, 1000, 1e-14).unwrap();
        let grad = huber_gradient(&x, &y, &m, 1.0);
        let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-8, "gradient norm {norm}");
    }

    #[test]
    fn predict_contract() {
        let m = LinearModel {
            intercept: 1.0,
            coefficients: vec![2.0],
            loss: LinearLoss::L2,
            l2_penalty: 0.0,
            selected_features: vec![],
        };
        assert_eq!(linear_predict(&m, &[3.0]).unwrap(), 7.0);
        assert_eq!(linear_predict(&m, &[0.0]).unwrap(), 1.0);
        assert!(matches!(
            linear_predict(&m, &[1.0, 2.0]),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }
}
