//! Model fitting over the feature table and the fit report.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::features::{is_dummy, FeatureRow, FEATURE_COUNT, FEATURE_NAMES, OUTCOME_NAME};
use crate::flightdata::IngestError;
use crate::regression::{
    cross_validate, default_lambda_grid, fit_lasso, fit_ols, fit_ridge, metrics, permutation_importance, split,
    CvResult, Dataset, ModelFit, Penalty, RegressionError, Scaler, DEFAULT_LASSO_MAX_ITER, DEFAULT_LASSO_TOL,
};

pub const FIT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub test_fraction: f64,
    pub folds: usize,
    pub lambda_grid: Vec<f64>,
    pub perm_repeats: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { test_fraction: 0.2, folds: 5, lambda_grid: default_lambda_grid(), perm_repeats: 20, seed: 7 }
    }
}

impl FitConfig {
    /// Seeds for the split, the fold assignment and the permutations.
    fn seeds(&self) -> (u64, u64, u64) {
        (self.seed, self.seed.wrapping_add(1), self.seed.wrapping_add(2))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Map<String, Value>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<Map<String, Value>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_values: Option<Map<String, Value>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
}

impl ModelReport {
    fn failed(model: &str, err: &RegressionError) -> Self {
        let status = match err {
            RegressionError::RankDeficient => "rank_deficient",
            RegressionError::NotConverged { .. } => "not_converged",
            _ => "error",
        };
        ModelReport {
            model: model.into(),
            status: status.into(),
            message: Some(err.to_string()),
            lambda: None,
            intercept: None,
            rmse: None,
            mae: None,
            r2: None,
            train_rmse: None,
            coefficients: None,
            std_errors: None,
            p_values: None,
            sweeps: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model: String,
    pub best_lambda: f64,
    pub grid: Vec<f64>,
    pub mean_rmse: Vec<f64>,
}

impl CvReport {
    fn new(model: &str, cv: &CvResult) -> Self {
        CvReport { model: model.into(), best_lambda: cv.best_lambda, grid: cv.grid.clone(), mean_rmse: cv.mean_rmse.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSummary {
    pub model: String,
    pub repeats: usize,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Contents of fit_report.json. Coefficients refer to standardized
/// continuous features and raw indicator features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub outcome: String,
    pub seed: u64,
    pub test_fraction: f64,
    pub folds: usize,
    pub n_rows: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub features: Vec<String>,
    /// Features constant over the whole table, left out of every model.
    pub dropped_features: Vec<String>,
    pub models: Vec<ModelReport>,
    pub cv: Vec<CvReport>,
    pub importance: ImportanceSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub feature: String,
    pub alpha: f64,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOutput {
    pub report: FitReport,
    /// Every feature in table order; dropped features carry zero importance.
    pub importance: Vec<ImportanceRow>,
}

/// Feature table as a regression data set, all 41 columns.
pub fn dataset_from_rows(rows: &[FeatureRow]) -> Result<Dataset, RegressionError> {
    let x = DMatrix::from_fn(rows.len(), FEATURE_COUNT, |i, j| rows[i].features.values()[j]);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.outcome));
    Dataset::new(
        x,
        y,
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        FEATURE_NAMES.iter().map(|s| is_dummy(s)).collect(),
    )
}

fn keyed(names: &[String], values: &[f64]) -> Map<String, Value> {
    names.iter().zip(values).map(|(n, v)| (n.clone(), Value::from(*v))).collect()
}

fn model_report(fit: &ModelFit, names: &[String], x_test: &DMatrix<f64>, test: &Dataset, x_train: &DMatrix<f64>, train: &Dataset) -> Result<ModelReport, RegressionError> {
    let m = metrics(&fit.predict(x_test), &test.y)?;
    let tm = metrics(&fit.predict(x_train), &train.y)?;
    Ok(ModelReport {
        model: fit.kind.as_str().into(),
        status: "ok".into(),
        message: None,
        lambda: Some(fit.lambda),
        intercept: Some(fit.intercept),
        rmse: Some(m.rmse),
        mae: Some(m.mae),
        r2: m.r2,
        train_rmse: Some(tm.rmse),
        coefficients: Some(keyed(names, &fit.coefs)),
        std_errors: fit.std_errors.as_ref().map(|v| keyed(names, v)),
        p_values: fit.p_values.as_ref().map(|v| keyed(names, v)),
        sweeps: fit.sweeps,
    })
}

fn rank_desc(alpha: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..alpha.len()).collect();
    order.sort_by(|&a, &b| alpha[b].total_cmp(&alpha[a]).then(a.cmp(&b)));
    let mut rank = vec![0; alpha.len()];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos + 1;
    }
    rank
}

/// Split, standardize, tune ridge and lasso by k-fold validation, fit all
/// three models on the training part, score them on the held-out part, and
/// compute permutation importance of the tuned ridge on the held-out part.
///
/// Only data-level problems (too few rows, no usable feature) are errors;
/// a rank-deficient least-squares fit or a non-converged lasso is recorded
/// in the report.
pub fn run_fit(rows: &[FeatureRow], cfg: &FitConfig) -> Result<FitOutput, RegressionError> {
    let full = dataset_from_rows(rows)?;
    let constant = full.constant_columns();
    let keep: Vec<usize> = (0..full.p()).filter(|j| !constant.contains(j)).collect();
    if keep.is_empty() {
        return Err(RegressionError::Invalid("every feature is constant".into()));
    }
    let data = full.columns(&keep);
    let (split_seed, cv_seed, perm_seed) = cfg.seeds();
    let s = split(&data, cfg.test_fraction, split_seed)?;
    let scaler = Scaler::fit(&s.train.x, &s.train.dummy_mask);
    let (x_train, x_test) = (scaler.apply(&s.train.x), scaler.apply(&s.test.x));

    let ridge_cv = cross_validate(&s.train, &cfg.lambda_grid, cfg.folds, cv_seed, Penalty::Ridge)?;
    let lasso_cv = cross_validate(&s.train, &cfg.lambda_grid, cfg.folds, cv_seed, Penalty::Lasso)?;

    let names = &data.names;
    let report_of = |fit: &ModelFit| model_report(fit, names, &x_test, &s.test, &x_train, &s.train);
    let mut models = Vec::new();
    models.push(match fit_ols(&x_train, &s.train.y) {
        Ok(fit) => report_of(&fit)?,
        Err(e) => ModelReport::failed("ols", &e),
    });
    let ridge = fit_ridge(&x_train, &s.train.y, ridge_cv.best_lambda)?;
    models.push(report_of(&ridge)?);
    models.push(match fit_lasso(&x_train, &s.train.y, lasso_cv.best_lambda, DEFAULT_LASSO_TOL, DEFAULT_LASSO_MAX_ITER) {
        Ok(fit) => report_of(&fit)?,
        Err(RegressionError::NotConverged { max_iter, partial }) => {
            let mut r = report_of(&partial)?;
            r.status = "not_converged".into();
            r.message = Some(format!("stopped after {max_iter} sweeps; last iterate reported"));
            r
        }
        Err(e) => ModelReport::failed("lasso", &e),
    });

    let mut alpha_full = vec![0.0; FEATURE_COUNT];
    let importance = match permutation_importance(&ridge, &x_test, &s.test.y, cfg.perm_repeats, perm_seed) {
        Ok(imp) => {
            for (k, &j) in keep.iter().enumerate() {
                alpha_full[j] = imp.alpha[k];
            }
            ImportanceSummary {
                model: "ridge".into(),
                repeats: cfg.perm_repeats,
                status: "ok".into(),
                baseline_r2: Some(imp.baseline_r2),
                message: None,
            }
        }
        Err(e) => ImportanceSummary {
            model: "ridge".into(),
            repeats: cfg.perm_repeats,
            status: "undefined".into(),
            baseline_r2: None,
            message: Some(e.to_string()),
        },
    };
    let importance_rows = if importance.status == "ok" {
        let rank = rank_desc(&alpha_full);
        FEATURE_NAMES
            .iter()
            .enumerate()
            .map(|(j, n)| ImportanceRow { feature: n.to_string(), alpha: alpha_full[j], rank: rank[j] })
            .collect()
    } else {
        Vec::new()
    };

    Ok(FitOutput {
        report: FitReport {
            schema_version: FIT_SCHEMA_VERSION,
            outcome: OUTCOME_NAME.into(),
            seed: cfg.seed,
            test_fraction: cfg.test_fraction,
            folds: cfg.folds,
            n_rows: data.n(),
            n_train: s.train.n(),
            n_test: s.test.n(),
            features: names.clone(),
            dropped_features: constant.iter().map(|&j| full.names[j].clone()).collect(),
            models,
            cv: vec![CvReport::new("ridge", &ridge_cv), CvReport::new("lasso", &lasso_cv)],
            importance,
        },
        importance: importance_rows,
    })
}

pub const IMPORTANCE_HEADER: [&str; 3] = ["feature", "alpha", "rank"];

pub fn write_importance<W: Write>(out: W, rows: &[ImportanceRow]) -> Result<(), IngestError> {
    let io = |e: csv::Error| IngestError::Io(e.to_string());
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(IMPORTANCE_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([r.feature.as_str(), &r.alpha.to_string(), &r.rank.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| IngestError::Io(e.to_string()))
}
