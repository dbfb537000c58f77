//! Linear models for the per-program outcome: ordinary least squares, ridge
//! and lasso, with standardization, k-fold tuning, error metrics and
//! permutation importance.
//!
//! Objective conventions:
//! * ridge minimizes `Σ(y - ŷ)² + λ‖β‖²` (unnormalized squared error);
//! * lasso minimizes `(1/2n) Σ(y - ŷ)² + λ‖β‖₁`.
//!
//! The intercept is never penalized. Both penalized fits center `X` and `y`
//! and recover the intercept afterwards.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("lasso did not converge within {max_iter} sweeps")]
    NotConverged { max_iter: usize, partial: Box<ModelFit> },
    #[error("target has zero variance, R² is undefined")]
    ZeroVarianceTarget,
    #[error("baseline R² {0} is not positive, importance is undefined")]
    DegenerateScore(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, RegressionError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(RegressionError::Invalid(msg.into()))
}

/// Observations in rows, features in columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub names: Vec<String>,
    /// Indicator columns, passed through the scaler untouched.
    pub dummy_mask: Vec<bool>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, names: Vec<String>, dummy_mask: Vec<bool>) -> Result<Self> {
        if x.nrows() != y.len() {
            return invalid(format!("{} rows but {} targets", x.nrows(), y.len()));
        }
        if names.len() != x.ncols() || dummy_mask.len() != x.ncols() {
            return invalid("names and dummy mask must have one entry per column");
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return invalid("non-finite value in data");
        }
        Ok(Dataset { x, y, names, dummy_mask })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i])),
            names: self.names.clone(),
            dummy_mask: self.dummy_mask.clone(),
        }
    }

    pub fn columns(&self, keep: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_columns(keep),
            y: self.y.clone(),
            names: keep.iter().map(|&j| self.names[j].clone()).collect(),
            dummy_mask: keep.iter().map(|&j| self.dummy_mask[j]).collect(),
        }
    }

    /// Columns whose values are all equal.
    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.p())
            .filter(|&j| {
                let col = self.x.column(j);
                col.iter().all(|v| *v == col[0])
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Seeded shuffle; the first `ceil(n (1 - f))` shuffled rows train.
pub fn split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return invalid("test fraction must lie strictly between 0 and 1");
    }
    let n = d.n();
    let n_train = ((n as f64 * (1.0 - test_fraction)) - 1e-9).ceil().max(0.0) as usize;
    if n_train == 0 || n_train >= n {
        return invalid(format!("{n} rows cannot be split with test fraction {test_fraction}"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train_rows, test_rows) = (order[..n_train].to_vec(), order[n_train..].to_vec());
    Ok(Split { train: d.rows(&train_rows), test: d.rows(&test_rows), train_rows, test_rows })
}

/// Column standardization learned from training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Non-indicator columns with zero variance, passed through.
    pub zero_variance: Vec<usize>,
}

impl Scaler {
    /// Population mean and standard deviation per non-indicator column.
    pub fn fit(x: &DMatrix<f64>, dummy_mask: &[bool]) -> Scaler {
        let n = x.nrows().max(1) as f64;
        let mut s = Scaler { means: vec![0.0; x.ncols()], stds: vec![1.0; x.ncols()], zero_variance: Vec::new() };
        for (j, &dummy) in dummy_mask.iter().enumerate() {
            if dummy {
                continue;
            }
            let col = x.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 && var.sqrt() > 1e-12 * mean.abs() {
                s.means[j] = mean;
                s.stds[j] = var.sqrt();
            } else {
                s.zero_variance.push(j);
            }
        }
        s
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            if self.means[j] != 0.0 || self.stds[j] != 1.0 {
                col.apply(|v| *v = (*v - self.means[j]) / self.stds[j]);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ols,
    Ridge,
    Lasso,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ols => "ols",
            ModelKind::Ridge => "ridge",
            ModelKind::Lasso => "lasso",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub kind: ModelKind,
    pub intercept: f64,
    pub coefs: Vec<f64>,
    pub lambda: f64,
    /// Least squares only: standard errors of the coefficients.
    pub std_errors: Option<Vec<f64>>,
    /// Least squares only: two-sided t-test p-values of the coefficients.
    pub p_values: Option<Vec<f64>>,
    /// Lasso only: coordinate-descent sweeps used.
    pub sweeps: Option<usize>,
}

impl ModelFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let beta = DVector::from_column_slice(&self.coefs);
        (x * beta).add_scalar(self.intercept)
    }
}

fn centered(x: &DMatrix<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, f64) {
    let n = x.nrows() as f64;
    let x_mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let y_mean = y.sum() / n;
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-x_mean[j]);
    }
    (xc, y.add_scalar(-y_mean), x_mean, y_mean)
}

/// Reciprocal condition estimate of a symmetric positive semi-definite
/// matrix after scaling it to unit diagonal.
fn scaled_min_eigen(g: &DMatrix<f64>) -> f64 {
    let d: Vec<f64> = g.diagonal().iter().map(|v| v.sqrt()).collect();
    if d.iter().any(|v| v.is_nan() || *v <= 0.0) {
        return 0.0;
    }
    let scaled = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] / (d[i] * d[j]));
    scaled.symmetric_eigenvalues().min()
}

const RANK_TOLERANCE: f64 = 1e-10;

/// Least squares with an intercept via the normal equations.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<ModelFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if n != y.len() {
        return invalid("row count mismatch");
    }
    if n < p + 1 {
        return Err(RegressionError::RankDeficient);
    }
    let xa = x.clone().insert_column(0, 1.0);
    let gram = xa.transpose() * &xa;
    if scaled_min_eigen(&gram) < RANK_TOLERANCE {
        return Err(RegressionError::RankDeficient);
    }
    let chol = gram.clone().cholesky().ok_or(RegressionError::RankDeficient)?;
    let beta = chol.solve(&(xa.transpose() * y));
    let resid = y - &xa * &beta;
    let sse = resid.norm_squared();
    let df = n - p - 1;
    let (std_errors, p_values) = if df > 0 {
        let sigma2 = sse / df as f64;
        let inv = chol.inverse();
        let t = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
        let se: Vec<f64> = (1..=p).map(|j| (sigma2 * inv[(j, j)]).max(0.0).sqrt()).collect();
        let pv = se
            .iter()
            .zip(beta.iter().skip(1))
            .map(|(s, b)| {
                if *s > 0.0 {
                    2.0 * (1.0 - t.cdf((b / s).abs()))
                } else if *b == 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        (Some(se), Some(pv))
    } else {
        (None, None)
    };
    Ok(ModelFit {
        kind: ModelKind::Ols,
        intercept: beta[0],
        coefs: beta.iter().skip(1).copied().collect(),
        lambda: 0.0,
        std_errors,
        p_values,
        sweeps: None,
    })
}

/// Closed-form ridge on centered data.
pub fn fit_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<ModelFit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return invalid("ridge penalty must be finite and non-negative");
    }
    if x.nrows() != y.len() || x.nrows() == 0 {
        return invalid("row count mismatch or empty data");
    }
    let (xc, yc, x_mean, y_mean) = centered(x, y);
    let mut a = xc.transpose() * &xc;
    if lambda == 0.0 && scaled_min_eigen(&a) < RANK_TOLERANCE {
        return Err(RegressionError::RankDeficient);
    }
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let beta = a.cholesky().ok_or(RegressionError::RankDeficient)?.solve(&(xc.transpose() * yc));
    Ok(ModelFit {
        kind: ModelKind::Ridge,
        intercept: y_mean - x_mean.dot(&beta),
        coefs: beta.iter().copied().collect(),
        lambda,
        std_errors: None,
        p_values: None,
        sweeps: None,
    })
}

/// Smallest penalty at which every lasso coefficient is zero: `max|Xcᵀyc| / n`.
pub fn lasso_lambda_max(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let (xc, yc, _, _) = centered(x, y);
    let n = x.nrows() as f64;
    xc.column_iter().map(|c| (c.dot(&yc) / n).abs()).fold(0.0, f64::max)
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Largest violation of the lasso optimality conditions on centered data:
/// `|g_j| <= λ` for zero coefficients and `g_j = λ sign(β_j)` otherwise,
/// where `g = Xcᵀ r / n`.
pub fn lasso_kkt_residual(x: &DMatrix<f64>, y: &DVector<f64>, fit: &ModelFit) -> f64 {
    let (xc, yc, _, _) = centered(x, y);
    let beta = DVector::from_column_slice(&fit.coefs);
    let r = yc - &xc * beta;
    kkt(&xc, &r, &fit.coefs, fit.lambda)
}

fn kkt(xc: &DMatrix<f64>, r: &DVector<f64>, beta: &[f64], lambda: f64) -> f64 {
    let n = xc.nrows() as f64;
    xc.column_iter()
        .zip(beta)
        .map(|(c, b)| {
            let g = c.dot(r) / n;
            if *b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Cyclic coordinate descent with soft-thresholding. Stops once a full sweep
/// moves no coefficient by `tol` or more and the optimality conditions hold
/// within `tol`.
pub fn fit_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, tol: f64, max_iter: usize) -> Result<ModelFit> {
    if !(lambda >= 0.0 && lambda.is_finite()) || tol.is_nan() || tol <= 0.0 {
        return invalid("lasso needs a finite non-negative penalty and a positive tolerance");
    }
    if x.nrows() != y.len() || x.nrows() == 0 {
        return invalid("row count mismatch or empty data");
    }
    let (xc, yc, x_mean, y_mean) = centered(x, y);
    let n = x.nrows() as f64;
    let col_sq: Vec<f64> = xc.column_iter().map(|c| c.norm_squared() / n).collect();
    let mut beta = vec![0.0; x.ncols()];
    let mut r = yc;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_iter {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..beta.len() {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = xc.column(j);
            let rho = col.dot(&r) / n + col_sq[j] * beta[j];
            let new = soft_threshold(rho, lambda) / col_sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                r.axpy(-delta, &col, 1.0);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < tol && kkt(&xc, &r, &beta, lambda) < tol {
            converged = true;
            break;
        }
    }
    let fit = ModelFit {
        kind: ModelKind::Lasso,
        intercept: y_mean - x_mean.iter().zip(&beta).map(|(m, b)| m * b).sum::<f64>(),
        coefs: beta,
        lambda,
        std_errors: None,
        p_values: None,
        sweeps: Some(sweeps),
    };
    if converged {
        Ok(fit)
    } else {
        Err(RegressionError::NotConverged { max_iter, partial: Box::new(fit) })
    }
}

pub const DEFAULT_LASSO_TOL: f64 = 1e-8;
pub const DEFAULT_LASSO_MAX_ITER: usize = 100_000;

/// Penalized model family tuned by cross-validation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    Ridge,
    Lasso,
}

/// Fits the family at `lambda`. A lasso fit that hits its sweep limit
/// returns its last iterate.
pub fn fit_penalized(penalty: Penalty, x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<ModelFit> {
    match penalty {
        Penalty::Ridge => fit_ridge(x, y, lambda),
        Penalty::Lasso => match fit_lasso(x, y, lambda, DEFAULT_LASSO_TOL, DEFAULT_LASSO_MAX_ITER) {
            Err(RegressionError::NotConverged { partial, .. }) => Ok(*partial),
            other => other,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub grid: Vec<f64>,
    pub mean_rmse: Vec<f64>,
    pub best_lambda: f64,
    pub fold_assignments: Vec<usize>,
}

/// Seeded k-fold assignment: row `order[i]` goes to fold `i mod k`.
pub fn fold_assignments(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (i, row) in order.into_iter().enumerate() {
        folds[row] = i % k;
    }
    folds
}

/// k-fold grid search. The scaler is re-fit on each fold's training part;
/// the score is the fold-averaged validation RMSE and ties go to the
/// smallest penalty.
pub fn cross_validate(train: &Dataset, grid: &[f64], k: usize, seed: u64, penalty: Penalty) -> Result<CvResult> {
    if k < 2 || k > train.n() {
        return invalid(format!("cannot run {k}-fold validation on {} rows", train.n()));
    }
    if grid.is_empty() || grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return invalid("penalty grid must be non-empty, finite and non-negative");
    }
    let folds = fold_assignments(train.n(), k, seed);
    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|fold| -> Result<Vec<f64>> {
            let fit_rows: Vec<usize> = (0..train.n()).filter(|&i| folds[i] != fold).collect();
            let val_rows: Vec<usize> = (0..train.n()).filter(|&i| folds[i] == fold).collect();
            let (fit_part, val_part) = (train.rows(&fit_rows), train.rows(&val_rows));
            let scaler = Scaler::fit(&fit_part.x, &fit_part.dummy_mask);
            let (xf, xv) = (scaler.apply(&fit_part.x), scaler.apply(&val_part.x));
            grid.iter()
                .map(|&lambda| {
                    let model = fit_penalized(penalty, &xf, &fit_part.y, lambda)?;
                    Ok(metrics(&model.predict(&xv), &val_part.y)?.rmse)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mean_rmse: Vec<f64> =
        (0..grid.len()).map(|g| per_fold.iter().map(|f| f[g]).sum::<f64>() / k as f64).collect();
    let mut best = 0;
    for g in 1..grid.len() {
        let better = mean_rmse[g] < mean_rmse[best] || (mean_rmse[g] == mean_rmse[best] && grid[g] < grid[best]);
        if better {
            best = g;
        }
    }
    Ok(CvResult { grid: grid.to_vec(), mean_rmse, best_lambda: grid[best], fold_assignments: folds })
}

/// Log-spaced penalties from 1e-3 to 1e3 (four per decade) plus 0.77.
pub fn default_lambda_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (-12..=12).map(|k| 10f64.powf(k as f64 / 4.0)).collect();
    grid.push(0.77);
    grid.sort_by(f64::total_cmp);
    grid
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// `None` when the target has zero variance.
    pub r2: Option<f64>,
}

pub fn metrics(yhat: &DVector<f64>, y: &DVector<f64>) -> Result<Metrics> {
    if yhat.len() != y.len() || y.is_empty() {
        return invalid("predictions and targets must be non-empty and of equal length");
    }
    let n = y.len() as f64;
    let resid = y - yhat;
    Ok(Metrics {
        rmse: (resid.norm_squared() / n).sqrt(),
        mae: resid.iter().map(|r| r.abs()).sum::<f64>() / n,
        r2: r2_score(yhat, y).ok(),
    })
}

/// `1 - SSE / SST`.
pub fn r2_score(yhat: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(RegressionError::ZeroVarianceTarget);
    }
    Ok(1.0 - (y - yhat).norm_squared() / sst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub baseline_r2: f64,
    /// Mean relative R² drop per feature, in column order.
    pub alpha: Vec<f64>,
    /// 1-based rank per feature, largest drop first; ties keep column order.
    pub rank: Vec<usize>,
}

/// Relative drop in R² when one column is shuffled, averaged over `repeats`
/// permutations. Permutation `r` of column `i` draws from stream
/// `i * repeats + r` of a ChaCha8 generator seeded with `seed`.
pub fn permutation_importance(
    model: &ModelFit,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    repeats: usize,
    seed: u64,
) -> Result<Importance> {
    if repeats == 0 {
        return invalid("at least one repeat is required");
    }
    if x.ncols() != model.coefs.len() {
        return invalid("model and data disagree on the number of features");
    }
    let base_pred = model.predict(x);
    let baseline_r2 = r2_score(&base_pred, y)?;
    if baseline_r2 <= 0.0 {
        return Err(RegressionError::DegenerateScore(baseline_r2));
    }
    let n = x.nrows();
    let alpha: Vec<f64> = (0..x.ncols())
        .into_par_iter()
        .map(|i| {
            let col = x.column(i);
            let coef = model.coefs[i];
            let mut total = 0.0;
            for r in 0..repeats {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((i * repeats + r) as u64);
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                let pred = DVector::from_fn(n, |row, _| base_pred[row] + coef * (col[perm[row]] - col[row]));
                let r2 = r2_score(&pred, y).expect("target variance checked above");
                total += (baseline_r2 - r2) / baseline_r2;
            }
            total / repeats as f64
        })
        .collect();
    let mut order: Vec<usize> = (0..alpha.len()).collect();
    order.sort_by(|&a, &b| alpha[b].total_cmp(&alpha[a]).then(a.cmp(&b)));
    let mut rank = vec![0; alpha.len()];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos + 1;
    }
    Ok(Importance { baseline_r2, alpha, rank })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    fn vec(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn random_problem(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let beta = DVector::from_fn(p, |_, _| rng.random_range(-2.0..2.0));
        let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &x * beta + noise;
        (x, y.add_scalar(3.0))
    }

    fn dataset(x: DMatrix<f64>, y: DVector<f64>) -> Dataset {
        let p = x.ncols();
        Dataset::new(x, y, (0..p).map(|j| format!("x{j}")).collect(), vec![false; p]).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = dataset(DMatrix::from_fn(10, 1, |i, _| i as f64), DVector::from_fn(10, |i, _| i as f64));
        let s = split(&d, 0.2, 1).unwrap();
        assert_eq!((s.train.n(), s.test.n()), (8, 2));
        assert_eq!(split(&d, 0.2, 1).unwrap(), s);
        let mut all: Vec<_> = s.train_rows.iter().chain(&s.test_rows).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let two = dataset(col(&[1.0, 2.0]), vec(&[1.0, 2.0]));
        let s = split(&two, 0.5, 3).unwrap();
        assert_eq!((s.train.n(), s.test.n()), (1, 1));
        assert!(split(&two, 0.0, 3).is_err());
    }

    #[test]
    fn scaler_examples() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 5.0, 3.0, 1.0, 5.0]);
        let s = Scaler::fit(&x, &[false, true, false]);
        let z = s.apply(&x);
        assert_eq!(z.column(0).as_slice(), &[-1.0, 1.0]);
        assert_eq!((s.means[0], s.stds[0]), (2.0, 1.0));
        assert_eq!(z.column(1).as_slice(), &[0.0, 1.0]);
        assert_eq!(z.column(2).as_slice(), &[5.0, 5.0]);
        assert_eq!(s.zero_variance, vec![2]);
    }

    #[test]
    fn ols_examples() {
        let fit = fit_ols(&col(&[-1.0, 1.0]), &vec(&[-1.0, 1.0])).unwrap();
        assert_abs_diff_eq!(fit.coefs[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 0.0, epsilon = 1e-12);
        let x = DMatrix::from_fn(6, 2, |i, j| (i * (j + 1)) as f64 + (i * i) as f64 * j as f64);
        let y = DVector::from_fn(6, |i, _| 1.0 + 2.0 * x[(i, 0)] - 0.5 * x[(i, 1)]);
        let fit = fit_ols(&x, &y).unwrap();
        let m = metrics(&fit.predict(&x), &y).unwrap();
        assert!(m.rmse < 1e-9);
        assert_abs_diff_eq!(m.r2.unwrap(), 1.0, epsilon = 1e-12);
        let dup = DMatrix::from_fn(5, 2, |i, _| i as f64);
        assert_eq!(fit_ols(&dup, &vec(&[1.0, 2.0, 3.0, 5.0, 4.0])), Err(RegressionError::RankDeficient));
    }

    #[test]
    fn ols_p_values_flag_signal() {
        let (x, y) = random_problem(5, 200, 3);
        let fit = fit_ols(&x, &y).unwrap();
        let p = fit.p_values.unwrap();
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        let strong = fit.coefs.iter().zip(&p).filter(|(c, _)| c.abs() > 0.5).all(|(_, p)| *p < 1e-6);
        assert!(strong);
    }

    #[test]
    fn ridge_examples() {
        let fit = fit_ridge(&col(&[-1.0, 1.0]), &vec(&[-1.0, 1.0]), 2.0).unwrap();
        assert_abs_diff_eq!(fit.coefs[0], 0.5, epsilon = 1e-15);
        let (x, y) = random_problem(2, 50, 4);
        let heavy = fit_ridge(&x, &y, 1e9).unwrap();
        assert!(heavy.coefs.iter().all(|c| c.abs() < 1e-5));
        assert_abs_diff_eq!(heavy.intercept, y.mean(), epsilon = 1e-3);
        let ols = fit_ols(&x, &y).unwrap();
        let zero = fit_ridge(&x, &y, 0.0).unwrap();
        for (a, b) in ols.coefs.iter().zip(&zero.coefs) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn ridge_norm_shrinks_along_grid() {
        let (x, y) = random_problem(9, 80, 6);
        let norms: Vec<f64> = default_lambda_grid()
            .iter()
            .map(|&l| DVector::from_vec(fit_ridge(&x, &y, l).unwrap().coefs).norm())
            .collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn lasso_examples() {
        let fit = fit_lasso(&col(&[-1.0, 1.0]), &vec(&[-2.0, 2.0]), 0.5, 1e-12, 1000).unwrap();
        assert_abs_diff_eq!(fit.coefs[0], 1.5, epsilon = 1e-12);
        let (x, y) = random_problem(3, 100, 5);
        let ols = fit_ols(&x, &y).unwrap();
        let lasso = fit_lasso(&x, &y, 0.0, 1e-10, 100_000).unwrap();
        for (a, b) in ols.coefs.iter().zip(&lasso.coefs) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
        let lmax = lasso_lambda_max(&x, &y);
        let zero = fit_lasso(&x, &y, lmax, 1e-10, 10).unwrap();
        assert!(zero.coefs.iter().all(|c| *c == 0.0));
        assert_abs_diff_eq!(zero.intercept, y.mean(), epsilon = 1e-12);
    }

    #[test]
    fn lasso_reports_non_convergence() {
        let (x, y) = random_problem(4, 60, 8);
        match fit_lasso(&x, &y, 0.01, 1e-14, 1) {
            Err(RegressionError::NotConverged { max_iter: 1, partial }) => assert_eq!(partial.sweeps, Some(1)),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn metrics_examples() {
        let y = vec(&[0.0, 2.0]);
        let m = metrics(&vec(&[1.0, 1.0]), &y).unwrap();
        assert_eq!((m.rmse, m.mae, m.r2), (1.0, 1.0, Some(0.0)));
        let m = metrics(&y, &y).unwrap();
        assert_eq!((m.rmse, m.mae, m.r2), (0.0, 0.0, Some(1.0)));
        assert_eq!(r2_score(&y, &vec(&[3.0, 3.0])), Err(RegressionError::ZeroVarianceTarget));
    }

    #[test]
    fn cv_examples() {
        let (x, y) = random_problem(11, 120, 4);
        let d = dataset(x, y);
        let single = cross_validate(&d, &[0.3], 5, 1, Penalty::Ridge).unwrap();
        assert_eq!(single.best_lambda, 0.3);
        let a = cross_validate(&d, &default_lambda_grid(), 5, 1, Penalty::Lasso).unwrap();
        assert_eq!(a, cross_validate(&d, &default_lambda_grid(), 5, 1, Penalty::Lasso).unwrap());
        assert!(a.fold_assignments.iter().all(|f| *f < 5));
        let best = a.grid.iter().position(|l| *l == a.best_lambda).unwrap();
        assert!(a.mean_rmse.iter().all(|r| *r >= a.mean_rmse[best]));
    }

    #[test]
    fn cv_prefers_shrinkage_with_many_noise_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (n, p) = (60, 30);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| 2.0 * x[(i, 0)] - x[(i, 1)] + 2.0 * rng.sample::<f64, _>(StandardNormal));
        let cv = cross_validate(&dataset(x, y), &default_lambda_grid(), 5, 4, Penalty::Lasso).unwrap();
        assert!(cv.best_lambda > 0.0);
        assert!(cv.best_lambda > default_lambda_grid()[0]);
    }

    #[test]
    fn importance_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 400;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| x[(i, 0)]);
        let fit = fit_ols(&x, &y).unwrap();
        let imp = permutation_importance(&fit, &x, &y, 20, 7).unwrap();
        assert!((imp.alpha[0] - 2.0).abs() < 0.3, "{:?}", imp.alpha);
        assert!(imp.alpha[1].abs() < 0.05);
        assert_eq!(imp.rank, vec![1, 2]);
        assert_eq!(permutation_importance(&fit, &x, &y, 20, 7).unwrap(), imp);
        let flat = ModelFit { coefs: vec![0.0, 0.0], intercept: 5.0, ..fit };
        assert!(matches!(permutation_importance(&flat, &x, &y, 3, 7), Err(RegressionError::DegenerateScore(_))));
    }

    proptest! {
        #[test]
        fn metric_orderings(pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..40)) {
            let y = DVector::from_iterator(pairs.len(), pairs.iter().map(|p| p.0));
            let yhat = DVector::from_iterator(pairs.len(), pairs.iter().map(|p| p.1));
            let m = metrics(&yhat, &y).unwrap();
            prop_assert!(m.rmse + 1e-12 >= m.mae);
            prop_assert!(m.mae >= 0.0);
            if let Some(r2) = m.r2 {
                prop_assert!(r2 <= 1.0);
            }
        }
    }
}
