//! Low-rank matrix-factorization imputation for label-encoded street-name
//! columns, fit per city, with pluggable losses and regularizers and an
//! Unknown fallback gate when held-out error is too high.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImputeError {
    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },
    #[error("row {0} has no observed entries")]
    EmptyRow(usize),
    #[error("column {0} has no observed entries")]
    EmptyColumn(usize),
    #[error("empty holdout")]
    EmptyHoldout,
    #[error("column kinds length {got} does not match column count {expected}")]
    KindsMismatch { got: usize, expected: usize },
    #[error("{loss} loss requires nominal columns only")]
    NumericColumnUnderCategoricalLoss { loss: &'static str },
    #[error("matrix shape mismatch")]
    ShapeMismatch,
}

/// Loss applied to observed entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Quadratic,
    Huber { delta: f64 },
    Multinomial,
    OneVsAll,
}

impl Loss {
    fn is_categorical(self) -> bool {
        matches!(self, Loss::Multinomial | Loss::OneVsAll)
    }
}

/// Factor regularizer applied to both U and V.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    None,
    L2 { lambda: f64 },
    L1 { lambda: f64 },
}

/// How each original column should be treated when imputing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeColumnKind {
    Numeric,
    /// Label-encoded categories; imputed values snap to a category code.
    Nominal,
}

/// Partially observed numeric matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl MaskedMatrix {
    pub fn from_options(n_rows: usize, n_cols: usize, cells: &[Option<f64>]) -> MaskedMatrix {
        assert_eq!(cells.len(), n_rows * n_cols);
        MaskedMatrix {
            n_rows,
            n_cols,
            values: cells.iter().map(|c| c.unwrap_or(0.0)).collect(),
            mask: cells.iter().map(|c| c.is_some()).collect(),
        }
    }

    pub fn fully_observed(n_rows: usize, n_cols: usize, values: Vec<f64>) -> MaskedMatrix {
        assert_eq!(values.len(), n_rows * n_cols);
        MaskedMatrix {
            n_rows,
            n_cols,
            mask: vec![true; values.len()],
            values,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if self.mask[i * self.n_cols + j] {
            Some(self.values[i * self.n_cols + j])
        } else {
            None
        }
    }

    pub fn hide(&mut self, i: usize, j: usize) -> Option<f64> {
        let idx = i * self.n_cols + j;
        if self.mask[idx] {
            self.mask[idx] = false;
            Some(self.values[idx])
        } else {
            None
        }
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn missing_entries(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                if !self.mask[i * self.n_cols + j] {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Per-column category codes observed at fit time (categorical losses
/// expand each nominal column to one score column per category).
type CategoryMap = Vec<Vec<f64>>;

/// Fitted factor pair plus configuration and objective trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankModel {
    /// n_rows x rank, row-major.
    pub u: Vec<f64>,
    /// rank x width, row-major (width = n_cols, or total categories under
    /// categorical losses).
    pub v: Vec<f64>,
    pub n_rows: usize,
    pub n_cols: usize,
    pub rank: usize,
    pub loss: Loss,
    pub regularizer: Regularizer,
    pub objective_trace: Vec<f64>,
    pub seed: u64,
    categories: Option<CategoryMap>,
}

impl LowRankModel {
    fn width(&self) -> usize {
        match &self.categories {
            Some(cats) => cats.iter().map(|c| c.len()).sum(),
            None => self.n_cols,
        }
    }

    pub fn u_row(&self, i: usize) -> &[f64] {
        &self.u[i * self.rank..(i + 1) * self.rank]
    }

    /// Reconstructed value u_i . v_j in internal (possibly expanded) space.
    pub fn reconstruct(&self, i: usize, j: usize) -> f64 {
        let w = self.width();
        (0..self.rank)
            .map(|r| self.u[i * self.rank + r] * self.v[r * w + j])
            .sum()
    }

    /// Scores over the categories of original column `j` (categorical
    /// losses only).
    fn category_scores(&self, i: usize, j: usize) -> Vec<(f64, f64)> {
        let cats = self.categories.as_ref().unwrap();
        let offset: usize = cats[..j].iter().map(|c| c.len()).sum();
        cats[j]
            .iter()
            .enumerate()
            .map(|(c, code)| (*code, self.reconstruct(i, offset + c)))
            .collect()
    }

    /// Predicted value for original cell (i, j) under this model.
    pub fn predict(&self, i: usize, j: usize, kind: ImputeColumnKind) -> f64 {
        if self.loss.is_categorical() {
            // Argmax-scoring category; ties go to the lower code.
            let scores = self.category_scores(i, j);
            let mut best = scores[0];
            for s in &scores[1..] {
                if s.1 > best.1 {
                    best = *s;
                }
            }
            best.0
        } else {
            let raw = self.reconstruct(i, j);
            match kind {
                ImputeColumnKind::Numeric => raw,
                ImputeColumnKind::Nominal => raw.round(),
            }
        }
    }
}

fn check_preconditions(observed: &MaskedMatrix, rank: usize) -> Result<(), ImputeError> {
    let max = observed.n_rows.min(observed.n_cols);
    if rank == 0 || rank > max {
        return Err(ImputeError::RankOutOfRange { rank, max });
    }
    for i in 0..observed.n_rows {
        if (0..observed.n_cols).all(|j| observed.get(i, j).is_none()) {
            return Err(ImputeError::EmptyRow(i));
        }
    }
    for j in 0..observed.n_cols {
        if (0..observed.n_rows).all(|i| observed.get(i, j).is_none()) {
            return Err(ImputeError::EmptyColumn(j));
        }
    }
    Ok(())
}

fn l2_lambda(reg: Regularizer) -> f64 {
    match reg {
        Regularizer::L2 { lambda } => lambda,
        _ => 0.0,
    }
}

fn reg_penalty(reg: Regularizer, factors: &[f64]) -> f64 {
    match reg {
        Regularizer::None => 0.0,
        Regularizer::L2 { lambda } => lambda * factors.iter().map(|x| x * x).sum::<f64>(),
        Regularizer::L1 { lambda } => lambda * factors.iter().map(|x| x.abs()).sum::<f64>(),
    }
}

fn huber_rho(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

struct NumericProblem<'a> {
    m: &'a MaskedMatrix,
}

impl NumericProblem<'_> {
    fn objective(&self, u: &[f64], v: &[f64], rank: usize, loss: Loss, reg: Regularizer) -> f64 {
        let w = self.m.n_cols;
        let mut obj = 0.0;
        for i in 0..self.m.n_rows {
            for j in 0..w {
                if let Some(x) = self.m.get(i, j) {
                    let pred: f64 = (0..rank).map(|r| u[i * rank + r] * v[r * w + j]).sum();
                    obj += match loss {
                        Loss::Quadratic => 0.5 * (x - pred) * (x - pred),
                        Loss::Huber { delta } => huber_rho(x - pred, delta),
                        _ => unreachable!(),
                    };
                }
            }
        }
        obj + reg_penalty(reg, u) + reg_penalty(reg, v)
    }
}

/// Weighted ridge solve for one factor row: minimizes
/// sum_k w_k (x_k - g_k . beta)^2 / 2 + lambda |beta|^2.
fn solve_weighted_ridge(
    gram_rows: &[Vec<f64>],
    targets: &[f64],
    weights: &[f64],
    lambda: f64,
    rank: usize,
) -> Vec<f64> {
    let mut ata = DMatrix::<f64>::zeros(rank, rank);
    let mut atb = DVector::<f64>::zeros(rank);
    for ((g, x), w) in gram_rows.iter().zip(targets).zip(weights) {
        for a in 0..rank {
            for b in 0..rank {
                ata[(a, b)] += w * g[a] * g[b];
            }
            atb[a] += w * g[a] * x;
        }
    }
    for a in 0..rank {
        // Factor of 2 matches d/dbeta of lambda |beta|^2 against the
        // half-quadratic data term.
        ata[(a, a)] += 2.0 * lambda + 1e-12;
    }
    match ata.lu().solve(&atb) {
        Some(sol) => sol.iter().copied().collect(),
        None => vec![0.0; rank],
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// One half-step for numeric losses: update every row of U (or, by
/// transposition, every column of V).
#[allow(clippy::too_many_arguments)]
fn update_numeric_side(
    u: &mut [f64],
    v: &[f64],
    m: &MaskedMatrix,
    rank: usize,
    loss: Loss,
    reg: Regularizer,
    transposed: bool,
) {
    let (n_rows, n_cols) = if transposed {
        (m.n_cols, m.n_rows)
    } else {
        (m.n_rows, m.n_cols)
    };
    let get = |i: usize, j: usize| if transposed { m.get(j, i) } else { m.get(i, j) };
    let w_total = n_cols;
    for i in 0..n_rows {
        let mut gram_rows: Vec<Vec<f64>> = Vec::new();
        let mut targets: Vec<f64> = Vec::new();
        for j in 0..w_total {
            if let Some(x) = get(i, j) {
                let g: Vec<f64> = (0..rank).map(|r| v[r * w_total + j]).collect();
                gram_rows.push(g);
                targets.push(x);
            }
        }
        if gram_rows.is_empty() {
            continue;
        }
        let lambda = l2_lambda(reg);
        let mut beta: Vec<f64> = u[i * rank..(i + 1) * rank].to_vec();
        match loss {
            Loss::Quadratic => {
                let weights = vec![1.0; targets.len()];
                beta = solve_weighted_ridge(&gram_rows, &targets, &weights, lambda, rank);
            }
            Loss::Huber { delta } => {
                // IRLS: 5 reweighted least-squares passes.
                for _ in 0..5 {
                    let weights: Vec<f64> = gram_rows
                        .iter()
                        .zip(&targets)
                        .map(|(g, x)| {
                            let pred: f64 = g.iter().zip(&beta).map(|(a, b)| a * b).sum();
                            let r = (x - pred).abs();
                            if r <= delta {
                                1.0
                            } else {
                                delta / r
                            }
                        })
                        .collect();
                    beta = solve_weighted_ridge(&gram_rows, &targets, &weights, lambda, rank);
                }
            }
            _ => unreachable!(),
        }
        if let Regularizer::L1 { lambda } = reg {
            // Proximal step on the exact unregularized solve.
            let scale: f64 = gram_rows
                .iter()
                .map(|g| g.iter().map(|x| x * x).sum::<f64>())
                .sum::<f64>()
                .max(1e-12);
            for b in beta.iter_mut() {
                *b = soft_threshold(*b, lambda / scale);
            }
        }
        u[i * rank..(i + 1) * rank].copy_from_slice(&beta);
    }
}

struct CategoricalProblem {
    /// Per original column: observed category codes, sorted ascending.
    cats: CategoryMap,
    /// Per observed cell: (row, expanded column offset of its column's
    /// block, block length, class index within the block).
    observations: Vec<(usize, usize, usize, usize)>,
    width: usize,
}

impl CategoricalProblem {
    fn build(m: &MaskedMatrix) -> Result<CategoricalProblem, ImputeError> {
        let mut cats: CategoryMap = Vec::with_capacity(m.n_cols);
        for j in 0..m.n_cols {
            let mut col_cats: Vec<f64> = Vec::new();
            for i in 0..m.n_rows {
                if let Some(x) = m.get(i, j) {
                    if !col_cats.contains(&x) {
                        col_cats.push(x);
                    }
                }
            }
            col_cats.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cats.push(col_cats);
        }
        let offsets: Vec<usize> = cats
            .iter()
            .scan(0usize, |acc, c| {
                let o = *acc;
                *acc += c.len();
                Some(o)
            })
            .collect();
        let width = cats.iter().map(|c| c.len()).sum();
        let mut observations = Vec::new();
        for i in 0..m.n_rows {
            for j in 0..m.n_cols {
                if let Some(x) = m.get(i, j) {
                    let class = cats[j].iter().position(|c| *c == x).unwrap();
                    observations.push((i, offsets[j], cats[j].len(), class));
                }
            }
        }
        Ok(CategoricalProblem {
            cats,
            observations,
            width,
        })
    }

    fn objective(&self, u: &[f64], v: &[f64], rank: usize, loss: Loss, reg: Regularizer) -> f64 {
        let w = self.width;
        let mut obj = 0.0;
        for &(i, offset, len, class) in &self.observations {
            let scores: Vec<f64> = (0..len)
                .map(|c| {
                    (0..rank)
                        .map(|r| u[i * rank + r] * v[r * w + offset + c])
                        .sum()
                })
                .collect();
            obj += match loss {
                Loss::Multinomial => {
                    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let log_sum: f64 =
                        max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
                    log_sum - scores[class]
                }
                Loss::OneVsAll => scores
                    .iter()
                    .enumerate()
                    .map(|(c, s)| {
                        let y = if c == class { 1.0 } else { -1.0 };
                        (1.0 + (-y * s).exp()).ln()
                    })
                    .sum(),
                _ => unreachable!(),
            };
        }
        obj + reg_penalty(reg, u) + reg_penalty(reg, v)
    }

    /// Gradient of the loss with respect to all scores of one cell.
    fn score_gradient(&self, scores: &[f64], class: usize, loss: Loss) -> Vec<f64> {
        match loss {
            Loss::Multinomial => {
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                exps.iter()
                    .enumerate()
                    .map(|(c, e)| e / sum - if c == class { 1.0 } else { 0.0 })
                    .collect()
            }
            Loss::OneVsAll => scores
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    let y = if c == class { 1.0 } else { -1.0 };
                    -y / (1.0 + (y * s).exp())
                })
                .collect(),
            _ => unreachable!(),
        }
    }

    fn update_u(&self, u: &mut [f64], v: &[f64], rank: usize, loss: Loss, reg: Regularizer) {
        let w = self.width;
        let lambda = l2_lambda(reg);
        for _ in 0..10 {
            let mut grad = vec![0.0; u.len()];
            for &(i, offset, len, class) in &self.observations {
                let scores: Vec<f64> = (0..len)
                    .map(|c| {
                        (0..rank)
                            .map(|r| u[i * rank + r] * v[r * w + offset + c])
                            .sum()
                    })
                    .collect();
                let g = self.score_gradient(&scores, class, loss);
                for (c, gc) in g.iter().enumerate() {
                    for r in 0..rank {
                        grad[i * rank + r] += gc * v[r * w + offset + c];
                    }
                }
            }
            let v_norm2: f64 = v.iter().map(|x| x * x).sum();
            let step = 1.0 / (1.0 + v_norm2);
            for (idx, g) in grad.iter().enumerate() {
                u[idx] -= step * (g + 2.0 * lambda * u[idx]);
                if let Regularizer::L1 { lambda } = reg {
                    u[idx] = soft_threshold(u[idx], step * lambda);
                }
            }
        }
    }

    fn update_v(&self, u: &[f64], v: &mut [f64], rank: usize, loss: Loss, reg: Regularizer) {
        let w = self.width;
        let lambda = l2_lambda(reg);
        for _ in 0..10 {
            let mut grad = vec![0.0; v.len()];
            for &(i, offset, len, class) in &self.observations {
                let scores: Vec<f64> = (0..len)
                    .map(|c| {
                        (0..rank)
                            .map(|r| u[i * rank + r] * v[r * w + offset + c])
                            .sum()
                    })
                    .collect();
                let g = self.score_gradient(&scores, class, loss);
                for (c, gc) in g.iter().enumerate() {
                    for r in 0..rank {
                        grad[r * w + offset + c] += gc * u[i * rank + r];
                    }
                }
            }
            let u_norm2: f64 = u.iter().map(|x| x * x).sum();
            let step = 1.0 / (1.0 + u_norm2);
            for (idx, g) in grad.iter().enumerate() {
                v[idx] -= step * (g + 2.0 * lambda * v[idx]);
                if let Regularizer::L1 { lambda } = reg {
                    v[idx] = soft_threshold(v[idx], step * lambda);
                }
            }
        }
    }
}

/// Alternating minimization: fix V and update rows of U, then fix U and
/// update columns of V. Quadratic loss uses exact ridge solves, Huber uses
/// IRLS inside each half-step, categorical losses use proximal gradient
/// steps. Deterministic for a fixed seed.
#[allow(clippy::too_many_arguments)]
pub fn fit_low_rank(
    observed: &MaskedMatrix,
    rank: usize,
    loss: Loss,
    regularizer: Regularizer,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<LowRankModel, ImputeError> {
    // ALS can stall in a sign-mismatched basin on sparse observation
    // patterns; a few deterministic restarts from derived seeds and
    // keeping the lowest final objective avoids that.
    let mut best: Option<LowRankModel> = None;
    for restart in 0..3u64 {
        let restart_seed = seed.wrapping_add(restart.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let model = fit_low_rank_once(
            observed,
            rank,
            loss,
            regularizer,
            max_iters,
            tol,
            restart_seed,
        )?;
        let obj = *model.objective_trace.last().unwrap();
        let better = match &best {
            None => true,
            Some(b) => obj < *b.objective_trace.last().unwrap(),
        };
        if better {
            best = Some(model);
        }
    }
    let mut model = best.unwrap();
    model.seed = seed;
    Ok(model)
}

#[allow(clippy::too_many_arguments)]
fn fit_low_rank_once(
    observed: &MaskedMatrix,
    rank: usize,
    loss: Loss,
    regularizer: Regularizer,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<LowRankModel, ImputeError> {
    check_preconditions(observed, rank)?;
    let categorical = loss.is_categorical();
    let cat_problem = if categorical {
        Some(CategoricalProblem::build(observed)?)
    } else {
        None
    };
    let width = cat_problem
        .as_ref()
        .map(|p| p.width)
        .unwrap_or(observed.n_cols);

    // Init scale tracks the data magnitude; a fixed tiny scale makes the
    // first exact half-step blow up and can trap ALS away from the
    // global minimum on sparse observation patterns.
    let scale = if categorical {
        0.01
    } else {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..observed.n_rows {
            for j in 0..observed.n_cols {
                if let Some(x) = observed.get(i, j) {
                    sum += x.abs();
                    count += 1;
                }
            }
        }
        let mean_abs = if count > 0 { sum / count as f64 } else { 1.0 };
        (mean_abs / rank as f64).sqrt().max(0.01)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = (0..observed.n_rows * rank)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    let mut v: Vec<f64> = (0..rank * width)
        .map(|_| rng.random_range(-scale..scale))
        .collect();

    let mut trace = Vec::new();
    let objective = |u: &[f64], v: &[f64]| -> f64 {
        match &cat_problem {
            Some(p) => p.objective(u, v, rank, loss, regularizer),
            None => NumericProblem { m: observed }.objective(u, v, rank, loss, regularizer),
        }
    };
    let mut prev = objective(&u, &v);
    trace.push(prev);

    for _ in 0..max_iters {
        match &cat_problem {
            Some(p) => {
                p.update_u(&mut u, &v, rank, loss, regularizer);
                p.update_v(&u, &mut v, rank, loss, regularizer);
            }
            None => {
                update_numeric_side(&mut u, &v, observed, rank, loss, regularizer, false);
                // V update works on the transposed problem: columns of V
                // play the role of rows of U. Build a transposed view of V.
                let mut vt: Vec<f64> = vec![0.0; v.len()];
                for r in 0..rank {
                    for j in 0..width {
                        vt[j * rank + r] = v[r * width + j];
                    }
                }
                let mut ut: Vec<f64> = vec![0.0; u.len()];
                for i in 0..observed.n_rows {
                    for r in 0..rank {
                        ut[r * observed.n_rows + i] = u[i * rank + r];
                    }
                }
                update_numeric_side(&mut vt, &ut, observed, rank, loss, regularizer, true);
                for r in 0..rank {
                    for j in 0..width {
                        v[r * width + j] = vt[j * rank + r];
                    }
                }
            }
        }
        let obj = objective(&u, &v);
        trace.push(obj);
        let rel = (prev - obj).abs() / prev.abs().max(1e-12);
        prev = obj;
        if rel < tol {
            break;
        }
    }

    Ok(LowRankModel {
        u,
        v,
        n_rows: observed.n_rows,
        n_cols: observed.n_cols,
        rank,
        loss,
        regularizer,
        objective_trace: trace,
        seed,
        categories: cat_problem.map(|p| p.cats),
    })
}

/// Missing entries replaced by the model prediction; observed entries pass
/// through unchanged.
pub fn impute_missing(
    model: &LowRankModel,
    observed: &MaskedMatrix,
    column_kinds: &[ImputeColumnKind],
) -> Result<Vec<f64>, ImputeError> {
    if observed.n_rows != model.n_rows || observed.n_cols != model.n_cols {
        return Err(ImputeError::ShapeMismatch);
    }
    if column_kinds.len() != model.n_cols {
        return Err(ImputeError::KindsMismatch {
            got: column_kinds.len(),
            expected: model.n_cols,
        });
    }
    if model.loss.is_categorical()
        && column_kinds.contains(&ImputeColumnKind::Numeric)
    {
        return Err(ImputeError::NumericColumnUnderCategoricalLoss {
            loss: match model.loss {
                Loss::Multinomial => "multinomial",
                _ => "one_vs_all",
            },
        });
    }
    let mut out = vec![0.0; model.n_rows * model.n_cols];
    for i in 0..model.n_rows {
        for j in 0..model.n_cols {
            out[i * model.n_cols + j] = match observed.get(i, j) {
                Some(x) => x,
                None => model.predict(i, j, column_kinds[j]),
            };
        }
    }
    Ok(out)
}

/// Held-out imputation quality and the Unknown-fallback verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    pub categorical_error_rate: Option<f64>,
    pub numeric_rmse: Option<f64>,
    /// Strictly-below-threshold verdict; on fail, downstream pipelines
    /// substitute the Unknown code for all missing street names.
    pub pass: bool,
    pub threshold: f64,
}

/// Scores the model on entries hidden at fit time. The verdict compares
/// categorical error rate (or RMSE when every holdout column is numeric)
/// strictly against `threshold`.
pub fn evaluate_imputation(
    model: &LowRankModel,
    holdout: &[(usize, usize, f64)],
    column_kinds: &[ImputeColumnKind],
    threshold: f64,
) -> Result<ImputationReport, ImputeError> {
    if holdout.is_empty() {
        return Err(ImputeError::EmptyHoldout);
    }
    if column_kinds.len() != model.n_cols {
        return Err(ImputeError::KindsMismatch {
            got: column_kinds.len(),
            expected: model.n_cols,
        });
    }
    let mut cat_total = 0usize;
    let mut cat_wrong = 0usize;
    let mut num_total = 0usize;
    let mut sq_sum = 0.0;
    for &(i, j, truth) in holdout {
        let pred = model.predict(i, j, column_kinds[j]);
        match column_kinds[j] {
            ImputeColumnKind::Nominal => {
                cat_total += 1;
                if pred != truth {
                    cat_wrong += 1;
                }
            }
            ImputeColumnKind::Numeric => {
                num_total += 1;
                sq_sum += (pred - truth) * (pred - truth);
            }
        }
    }
    let categorical_error_rate = (cat_total > 0).then(|| cat_wrong as f64 / cat_total as f64);
    let numeric_rmse = (num_total > 0).then(|| (sq_sum / num_total as f64).sqrt());
    let score = categorical_error_rate.or(numeric_rmse).unwrap();
    Ok(ImputationReport {
        categorical_error_rate,
        numeric_rmse,
        pass: score < threshold,
        threshold,
    })
}
