//! Greedy stepwise feature selection scored by AIC or BIC on least-squares
//! fits.

use super::{fit_ols, linear_predict, ModelError};
use crate::eval::aic_bic;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMove {
    Add,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseResult {
    /// Selected feature indices, in selection order.
    pub selected: Vec<usize>,
    /// (step, move, feature index, criterion value after the move).
    pub trace: Vec<(usize, StepMove, usize, f64)>,
    /// Criterion value of the final model.
    pub criterion_value: f64,
}

fn subset_columns(x: &[Vec<f64>], subset: &[usize]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| subset.iter().map(|j| row[*j]).collect())
        .collect()
}

/// Criterion value of the OLS fit on `subset`; the intercept-only model is
/// scored from the target variance. Singular candidate fits score as
/// infinity so they are never chosen.
fn score_subset(x: &[Vec<f64>], y: &[f64], subset: &[usize], criterion: Criterion) -> f64 {
    let n = y.len();
    let rss = if subset.is_empty() {
        let mean = y.iter().sum::<f64>() / n as f64;
        y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
    } else {
        let xs = subset_columns(x, subset);
        match fit_ols(&xs, y, 0.0) {
            Ok(model) => xs
                .iter()
                .zip(y)
                .map(|(row, yi)| {
                    let r = yi - linear_predict(&model, row).unwrap();
                    r * r
                })
                .sum::<f64>(),
            Err(_) => return f64::INFINITY,
        }
    };
    let num_params = subset.len() + 1;
    if n <= num_params {
        return f64::INFINITY;
    }
    let ab = aic_bic(n, num_params, rss);
    match criterion {
        Criterion::Aic => ab.aic,
        Criterion::Bic => ab.bic,
    }
}

/// Adds or removes the single feature that most improves the criterion,
/// until no move improves it or `max_steps` is reached. Ties break toward
/// the lower feature index.
pub fn stepwise_select(
    x: &[Vec<f64>],
    y: &[f64],
    criterion: Criterion,
    direction: Direction,
    max_steps: usize,
) -> Result<StepwiseResult, ModelError> {
    if x.is_empty() || x[0].is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let n_features = x[0].len();
    let mut selected: Vec<usize> = match direction {
        Direction::Forward | Direction::Both => Vec::new(),
        Direction::Backward => (0..n_features).collect(),
    };
    let mut current = score_subset(x, y, &selected, criterion);
    let mut trace = Vec::new();

    for step in 0..max_steps {
        let mut best: Option<(f64, StepMove, usize)> = None;
        let allow_add = matches!(direction, Direction::Forward | Direction::Both);
        let allow_remove = matches!(direction, Direction::Backward | Direction::Both);
        if allow_add {
            for j in 0..n_features {
                if selected.contains(&j) {
                    continue;
                }
                let mut candidate = selected.clone();
                candidate.push(j);
                candidate.sort_unstable();
                let score = score_subset(x, y, &candidate, criterion);
                if best.map(|(s, _, _)| score < s).unwrap_or(true) {
                    best = Some((score, StepMove::Add, j));
                }
            }
        }
        if allow_remove {
            for j in selected.clone() {
                let candidate: Vec<usize> =
                    selected.iter().copied().filter(|k| *k != j).collect();
                let score = score_subset(x, y, &candidate, criterion);
                if best.map(|(s, _, _)| score < s).unwrap_or(true) {
                    best = Some((score, StepMove::Remove, j));
                }
            }
        }
        match best {
            Some((score, mv, j)) if score < current => {
                match mv {
                    StepMove::Add => selected.push(j),
                    StepMove::Remove => selected.retain(|k| *k != j),
                }
                current = score;
                trace.push((step, mv, j, score));
            }
            _ => break,
        }
    }

    Ok(StepwiseResult {
        selected,
        trace,
        criterion_value: current,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn signal_plus_noise(seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        // y depends only on feature 0; feature 1 is pure noise.
        let y: Vec<f64> = x
            .iter()
            .map(|r| 2.0 + 5.0 * r[0] + rng.random_range(-0.3..0.3))
            .collect();
        (x, y)
    }

    #[test]
    fn forward_aic_selects_only_the_signal_feature() {
        let (x, y) = signal_plus_noise(3);
        let result = stepwise_select(&x, &y, Criterion::Aic, Direction::Forward, 10).unwrap();
        assert_eq!(result.selected, vec![0]);
        // Exhaustive oracle over all 4 subsets agrees.
        let subsets: [&[usize]; 4] = [&[], &[0], &[1], &[0, 1]];
        let best = subsets
            .iter()
            .min_by(|a, b| {
                score_subset(&x, &y, a, Criterion::Aic)
                    .partial_cmp(&score_subset(&x, &y, b, Criterion::Aic))
                    .unwrap()
            })
            .unwrap();
        assert_eq!(*best, &[0][..]);
    }

    #[test]
    fn backward_can_eliminate_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        // Constant target: both features are noise.
        let y: Vec<f64> = (0..100).map(|_| 4.0 + rng.random_range(-0.01..0.01)).collect();
        let result = stepwise_select(&x, &y, Criterion::Bic, Direction::Backward, 10).unwrap();
        assert!(result.selected.is_empty(), "selected {:?}", result.selected);
    }

    #[test]
    fn max_steps_zero_keeps_empty_forward_selection() {
        let (x, y) = signal_plus_noise(1);
        let result = stepwise_select(&x, &y, Criterion::Aic, Direction::Forward, 0).unwrap();
        assert!(result.selected.is_empty());
        assert!(result.trace.is_empty());
    }

    #[test]
    fn trace_records_moves_in_order() {
        let (x, y) = signal_plus_noise(5);
        let result = stepwise_select(&x, &y, Criterion::Aic, Direction::Both, 10).unwrap();
        assert!(!result.trace.is_empty());
        assert_eq!(result.trace[0].1, StepMove::Add);
        assert_eq!(result.trace[0].2, 0);
    }
}
