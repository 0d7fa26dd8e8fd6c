//! Segment-wise elastic-net forecasts of next-month implied volatility.
//!
//! Each fit minimizes, on standardized predictors and target,
//!
//! ```text
//! (1/n) |y - X b|^2 + lambda * (alpha |b|_1 + (1 - alpha) |b|^2 / 2)
//! ```
//!
//! by cyclic coordinate descent. With unit population variance per column
//! the coordinate minimizer is
//! `b_k = S(rho_k, lambda alpha / 2) / (1 + lambda (1 - alpha) / 2)` where
//! `rho_k = x_k' r_k / n` on the partial residual. Note the factor 2 from the
//! unhalved squared loss: every coefficient is zero exactly when
//! `lambda >= 2 max_k |x_k' y| / (n alpha)`.

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{month_index, month_start, ExogenousSeries};

/// Standardized regression data for one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    /// Predictor month `t` of each row; the target is from month `t + 1`.
    pub months: Vec<NaiveDate>,
    /// Every predictor offered, including dropped ones.
    pub all_names: Vec<String>,
    /// Indices into `all_names` of the columns kept.
    pub kept: Vec<usize>,
    /// Raw values, `n x all_names.len()`.
    pub raw_x: DMatrix<f64>,
    pub raw_y: Vec<f64>,
    /// Standardized kept columns, `n x kept.len()`.
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub x_means: Vec<f64>,
    pub x_sds: Vec<f64>,
    pub y_mean: f64,
    /// Population standard deviation of the target; 1 when it is constant.
    pub y_sd: f64,
}

fn mean_sd(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

impl DesignMatrix {
    /// Standardizes `columns` (one vector per predictor) and `target`.
    /// Constant columns are dropped and listed by `dropped_names`.
    pub fn new(
        names: Vec<String>,
        columns: &[Vec<f64>],
        target: Vec<f64>,
        months: Vec<NaiveDate>,
    ) -> Result<Self> {
        let n = target.len();
        if names.len() != columns.len() {
            return Err(Error::Validation(format!("{} names for {} columns", names.len(), columns.len())));
        }
        if months.len() != n || columns.iter().any(|c| c.len() != n) {
            return Err(Error::Validation("columns, target and months differ in length".into()));
        }
        if n < 3 {
            return Err(Error::InsufficientData(format!("regression needs at least 3 rows, got {n}")));
        }
        if target.iter().chain(columns.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("design matrix has a missing or non-finite cell".into()));
        }
        let raw_x = DMatrix::from_fn(n, names.len(), |i, j| columns[j][i]);
        Self::from_raw(names, raw_x, target, months)
    }

    fn from_raw(all_names: Vec<String>, raw_x: DMatrix<f64>, raw_y: Vec<f64>, months: Vec<NaiveDate>) -> Result<Self> {
        let n = raw_y.len();
        let mut kept = Vec::new();
        let mut x_means = Vec::new();
        let mut x_sds = Vec::new();
        for j in 0..raw_x.ncols() {
            let (m, s) = mean_sd(raw_x.column(j).iter().copied());
            if s > 1e-12 * m.abs().max(1e-300) && s > 0.0 {
                kept.push(j);
                x_means.push(m);
                x_sds.push(s);
            }
        }
        let x = DMatrix::from_fn(n, kept.len(), |i, k| (raw_x[(i, kept[k])] - x_means[k]) / x_sds[k]);
        let (y_mean, sd) = mean_sd(raw_y.iter().copied());
        let y_sd = if sd > 1e-12 * y_mean.abs().max(1e-300) && sd > 0.0 { sd } else { 1.0 };
        let y = raw_y.iter().map(|v| (v - y_mean) / y_sd).collect();
        Ok(Self {
            months,
            all_names,
            kept,
            raw_x,
            raw_y,
            x,
            y,
            x_means,
            x_sds,
            y_mean,
            y_sd,
        })
    }

    /// Pairs predictors at month `t` with the target at month `t + 1` over
    /// the months where every series has a value.
    pub fn from_series(predictors: &[ExogenousSeries], target: &ExogenousSeries) -> Result<Self> {
        if predictors.is_empty() {
            return Err(Error::Validation("no predictor series".into()));
        }
        let maps: Vec<_> = predictors.iter().map(|p| p.by_month()).collect();
        let ym = target.by_month();
        let months: Vec<i32> = maps[0]
            .keys()
            .copied()
            .filter(|m| maps.iter().all(|mp| mp.contains_key(m)) && ym.contains_key(&(m + 1)))
            .collect();
        if months.len() < 3 {
            return Err(Error::Alignment(format!(
                "only {} months have every predictor and next-month {}",
                months.len(),
                target.name
            )));
        }
        let columns: Vec<Vec<f64>> = maps.iter().map(|mp| months.iter().map(|m| mp[m]).collect()).collect();
        let y = months.iter().map(|m| ym[&(m + 1)]).collect();
        Self::new(
            predictors.iter().map(|p| p.name.clone()).collect(),
            &columns,
            y,
            months.iter().map(|m| month_start(*m)).collect(),
        )
    }

    /// Rows `rows`, re-standardized on themselves.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if rows.len() < 3 {
            return Err(Error::InsufficientData(format!("subset of {} rows", rows.len())));
        }
        let raw_x = self.raw_x.select_rows(rows);
        let raw_y = rows.iter().map(|r| self.raw_y[*r]).collect();
        let months = rows.iter().map(|r| self.months[*r]).collect();
        Self::from_raw(self.all_names.clone(), raw_x, raw_y, months)
    }

    pub fn n_rows(&self) -> usize {
        self.raw_y.len()
    }

    pub fn dropped_names(&self) -> Vec<String> {
        (0..self.all_names.len())
            .filter(|j| !self.kept.contains(j))
            .map(|j| self.all_names[j].clone())
            .collect()
    }

    /// Smallest lambda at which every coefficient is zero for this `alpha`.
    pub fn lambda_max(&self, alpha: f64) -> f64 {
        let n = self.n_rows() as f64;
        let m = (0..self.x.ncols())
            .map(|k| self.x.column(k).iter().zip(&self.y).map(|(a, b)| a * b).sum::<f64>().abs())
            .fold(0.0, f64::max);
        2.0 * m / (n * alpha.max(ALPHA_FLOOR))
    }
}

/// Mixing values below this use it when sizing the lambda path.
const ALPHA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub r2: f64,
    /// Mean squared error in standardized target units.
    pub mse: f64,
    pub rmse: f64,
    pub n_nonzero: usize,
    pub n_obs: usize,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetModel {
    pub alpha: f64,
    pub lambda: f64,
    pub all_names: Vec<String>,
    pub kept: Vec<usize>,
    /// Coefficients on standardized predictors and target, one per kept column.
    pub coefficients: Vec<f64>,
    /// Intercept of the standardized solve; zero, the standardized target mean.
    pub intercept: f64,
    /// Raw-unit view, one per entry of `all_names` (zero when dropped).
    pub raw_coefficients: Vec<f64>,
    pub raw_intercept: f64,
    pub x_means: Vec<f64>,
    pub x_sds: Vec<f64>,
    pub y_mean: f64,
    pub y_sd: f64,
    pub diagnostics: FitDiagnostics,
}

impl ElasticNetModel {
    pub fn kept_names(&self) -> Vec<&str> {
        self.kept.iter().map(|j| self.all_names[*j].as_str()).collect()
    }

    pub fn dropped_names(&self) -> Vec<&str> {
        (0..self.all_names.len())
            .filter(|j| !self.kept.contains(j))
            .map(|j| self.all_names[j].as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Stop when no coefficient moves more than this in a full sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_sweeps: 100_000,
        }
    }
}

/// Penalized objective on standardized data.
pub fn objective(x: &DMatrix<f64>, y: &[f64], beta: &[f64], alpha: f64, lambda: f64) -> f64 {
    let n = y.len() as f64;
    let rss: f64 = (0..y.len())
        .map(|i| {
            let fit: f64 = beta.iter().enumerate().map(|(k, b)| x[(i, k)] * b).sum();
            (y[i] - fit).powi(2)
        })
        .sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    rss / n + lambda * (alpha * l1 + 0.5 * (1.0 - alpha) * l2)
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

fn check_penalty(alpha: f64, lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be nonnegative, got {lambda}")));
    }
    Ok(())
}

/// Coordinate descent from `beta`, which is updated in place.
fn descend(
    x: &DMatrix<f64>,
    y: &[f64],
    alpha: f64,
    lambda: f64,
    beta: &mut [f64],
    opts: &SolverOptions,
) -> Result<usize> {
    let n = y.len();
    let nf = n as f64;
    let k = beta.len();
    let mut resid: Vec<f64> = (0..n)
        .map(|i| y[i] - (0..k).map(|j| x[(i, j)] * beta[j]).sum::<f64>())
        .collect();
    let shrink = 1.0 + 0.5 * lambda * (1.0 - alpha);
    let thresh = 0.5 * lambda * alpha;
    #[cfg(debug_assertions)]
    let mut last = objective(x, y, beta, alpha, lambda);
    for sweep in 1..=opts.max_sweeps {
        let mut max_change = 0.0f64;
        for j in 0..k {
            let col = x.column(j);
            let old = beta[j];
            let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf + old;
            let new = soft_threshold(rho, thresh) / shrink;
            if new != old {
                let d = new - old;
                for (r, a) in resid.iter_mut().zip(col.iter()) {
                    *r -= a * d;
                }
                beta[j] = new;
                max_change = max_change.max(d.abs());
            }
        }
        #[cfg(debug_assertions)]
        {
            let now = objective(x, y, beta, alpha, lambda);
            debug_assert!(now <= last + 1e-12 * last.abs().max(1.0), "objective rose: {last} -> {now}");
            last = now;
        }
        if max_change < opts.tol {
            return Ok(sweep);
        }
    }
    Err(Error::numerical_with(
        format!("coordinate descent did not converge in {} sweeps", opts.max_sweeps),
        beta.to_vec(),
    ))
}

fn build_model(d: &DesignMatrix, alpha: f64, lambda: f64, beta: Vec<f64>, sweeps: usize) -> ElasticNetModel {
    let n = d.n_rows();
    let mut rss = 0.0;
    for i in 0..n {
        let fit: f64 = beta.iter().enumerate().map(|(k, b)| d.x[(i, k)] * b).sum();
        rss += (d.y[i] - fit).powi(2);
    }
    let tss: f64 = d.y.iter().map(|v| v * v).sum();
    let mse = rss / n as f64;
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { 0.0 };
    let mut raw_coefficients = vec![0.0; d.all_names.len()];
    let mut raw_intercept = d.y_mean;
    for (k, b) in beta.iter().enumerate() {
        let c = b * d.y_sd / d.x_sds[k];
        raw_coefficients[d.kept[k]] = c;
        raw_intercept -= c * d.x_means[k];
    }
    ElasticNetModel {
        alpha,
        lambda,
        all_names: d.all_names.clone(),
        kept: d.kept.clone(),
        coefficients: beta.clone(),
        intercept: 0.0,
        raw_coefficients,
        raw_intercept,
        x_means: d.x_means.clone(),
        x_sds: d.x_sds.clone(),
        y_mean: d.y_mean,
        y_sd: d.y_sd,
        diagnostics: FitDiagnostics {
            r2,
            mse,
            rmse: mse.sqrt(),
            n_nonzero: beta.iter().filter(|b| **b != 0.0).count(),
            n_obs: n,
            sweeps,
        },
    }
}

pub fn fit_elastic_net(d: &DesignMatrix, alpha: f64, lambda: f64) -> Result<ElasticNetModel> {
    fit_elastic_net_with(d, alpha, lambda, &SolverOptions::default(), None)
}

/// As `fit_elastic_net`, optionally warm-started from `start`.
pub fn fit_elastic_net_with(
    d: &DesignMatrix,
    alpha: f64,
    lambda: f64,
    opts: &SolverOptions,
    start: Option<&[f64]>,
) -> Result<ElasticNetModel> {
    check_penalty(alpha, lambda)?;
    let mut beta = match start {
        Some(s) if s.len() == d.x.ncols() => s.to_vec(),
        _ => vec![0.0; d.x.ncols()],
    };
    let sweeps = descend(&d.x, &d.y, alpha, lambda, &mut beta, opts)?;
    Ok(build_model(d, alpha, lambda, beta, sweeps))
}

/// Prediction in raw target units from a raw predictor vector over
/// `all_names` (dropped entries are ignored).
pub fn predict(model: &ElasticNetModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.all_names.len() {
        return Err(Error::Domain(format!(
            "predictor vector has {} entries, model expects {}",
            x.len(),
            model.all_names.len()
        )));
    }
    let z: f64 = model
        .kept
        .iter()
        .zip(&model.coefficients)
        .enumerate()
        .map(|(k, (j, b))| b * (x[*j] - model.x_means[k]) / model.x_sds[k])
        .sum();
    Ok(model.y_mean + model.y_sd * (model.intercept + z))
}

/// `n_lambda` log-spaced values from `lambda_max` down to
/// `ratio * lambda_max`.
pub fn lambda_path(lambda_max: f64, n_lambda: usize, ratio: f64) -> Vec<f64> {
    if n_lambda == 1 || lambda_max == 0.0 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..n_lambda)
        .map(|i| (hi + (lo - hi) * i as f64 / (n_lambda - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldScheme {
    /// Consecutive blocks in time order.
    #[default]
    Contiguous,
    /// Seeded shuffle before blocking.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub alpha_grid: Vec<f64>,
    /// Explicit lambdas; `None` uses a path per alpha.
    pub lambda_grid: Option<Vec<f64>>,
    pub n_lambda: usize,
    pub lambda_ratio: f64,
    pub folds: usize,
    pub scheme: FoldScheme,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            alpha_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            lambda_grid: None,
            n_lambda: 100,
            lambda_ratio: 1e-4,
            folds: 5,
            scheme: FoldScheme::Contiguous,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub alpha: f64,
    pub lambda: f64,
    /// Mean over folds of the held-out MSE, in units of the full-sample
    /// standardized target.
    pub mean_mse: f64,
    pub fold_mse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best_alpha: f64,
    pub best_lambda: f64,
    pub best_mse: f64,
    /// Pooled out-of-fold R-squared at the selected pair.
    pub oof_r2: f64,
    pub table: Vec<CvCell>,
}

/// Row indices of each held-out fold.
pub fn fold_indices(n: usize, folds: usize, scheme: FoldScheme, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if scheme == FoldScheme::Random {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    (0..folds)
        .map(|f| {
            let (a, b) = (f * n / folds, (f + 1) * n / folds);
            let mut idx = order[a..b].to_vec();
            idx.sort_unstable();
            idx
        })
        .collect()
}

/// Held-out squared errors along `lambdas` for one fold, warm-started.
fn fold_errors(
    d: &DesignMatrix,
    test: &[usize],
    alpha: f64,
    lambdas: &[f64],
    solver: &SolverOptions,
) -> Result<Vec<Vec<f64>>> {
    let train: Vec<usize> = (0..d.n_rows()).filter(|i| test.binary_search(i).is_err()).collect();
    let td = d.subset(&train)?;
    let mut beta = vec![0.0; td.x.ncols()];
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        descend(&td.x, &td.y, alpha, lambda, &mut beta, solver)?;
        let model = build_model(&td, alpha, lambda, beta.clone(), 0);
        let errs = test
            .iter()
            .map(|i| {
                let row: Vec<f64> = d.raw_x.row(*i).iter().copied().collect();
                let yhat = predict(&model, &row).expect("same predictor set");
                ((d.raw_y[*i] - yhat) / d.y_sd).powi(2)
            })
            .collect();
        out.push(errs);
    }
    Ok(out)
}

pub fn cross_validate(d: &DesignMatrix, cfg: &CvConfig) -> Result<CvResult> {
    if cfg.alpha_grid.is_empty() || cfg.lambda_grid.as_ref().is_some_and(|g| g.is_empty()) {
        return Err(Error::Domain("alpha and lambda grids must be nonempty".into()));
    }
    for &a in &cfg.alpha_grid {
        check_penalty(a, 0.0)?;
    }
    if let Some(g) = &cfg.lambda_grid {
        for &l in g {
            check_penalty(0.0, l)?;
        }
    }
    let n = d.n_rows();
    if cfg.folds < 2 || n < cfg.folds {
        return Err(Error::Domain(format!("{} folds for {n} rows", cfg.folds)));
    }
    let folds = fold_indices(n, cfg.folds, cfg.scheme, cfg.seed);
    let paths: Vec<Vec<f64>> = cfg
        .alpha_grid
        .iter()
        .map(|a| match &cfg.lambda_grid {
            Some(g) => {
                // descending order makes warm starts effective
                let mut g = g.clone();
                g.sort_by(|x, y| y.total_cmp(x));
                g
            }
            None => lambda_path(d.lambda_max(*a), cfg.n_lambda, cfg.lambda_ratio),
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..cfg.alpha_grid.len())
        .flat_map(|a| (0..folds.len()).map(move |f| (a, f)))
        .collect();
    let errs: Vec<Vec<Vec<f64>>> = jobs
        .par_iter()
        .map(|(a, f)| fold_errors(d, &folds[*f], cfg.alpha_grid[*a], &paths[*a], &cfg.solver))
        .collect::<Result<_>>()?;

    let mut table = Vec::new();
    for (a, alpha) in cfg.alpha_grid.iter().enumerate() {
        for (l, lambda) in paths[a].iter().enumerate() {
            let fold_mse: Vec<f64> = (0..folds.len())
                .map(|f| {
                    let e = &errs[a * folds.len() + f][l];
                    e.iter().sum::<f64>() / e.len().max(1) as f64
                })
                .collect();
            table.push(CvCell {
                alpha: *alpha,
                lambda: *lambda,
                mean_mse: fold_mse.iter().sum::<f64>() / fold_mse.len() as f64,
                fold_mse,
            });
        }
    }

    let best = table
        .iter()
        .enumerate()
        .min_by(|(_, p), (_, q)| {
            let tie = 1e-12 * p.mean_mse.abs().max(q.mean_mse.abs());
            if (p.mean_mse - q.mean_mse).abs() > tie {
                p.mean_mse.total_cmp(&q.mean_mse)
            } else {
                q.lambda.total_cmp(&p.lambda).then(q.alpha.total_cmp(&p.alpha))
            }
        })
        .map(|(i, _)| i)
        .expect("table is nonempty");
    let cell = &table[best];
    let a_idx = cfg.alpha_grid.iter().position(|a| *a == cell.alpha).unwrap();
    let l_idx = paths[a_idx].iter().position(|l| *l == cell.lambda).unwrap();
    let sse: f64 = (0..folds.len()).map(|f| errs[a_idx * folds.len() + f][l_idx].iter().sum::<f64>()).sum();
    let (_, ysd) = mean_sd(d.y.iter().copied());
    let tss = ysd * ysd * n as f64;
    Ok(CvResult {
        best_alpha: cell.alpha,
        best_lambda: cell.lambda,
        best_mse: cell.mean_mse,
        oof_r2: if tss > 0.0 { 1.0 - sse / tss } else { 0.0 },
        table,
    })
}

/// Inclusive range of predictor months.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonthRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl MonthRange {
    pub fn contains(&self, d: NaiveDate) -> bool {
        (month_index(self.start)..=month_index(self.end)).contains(&month_index(d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentForecast {
    /// 1-based segment number.
    pub segment: usize,
    pub range: MonthRange,
    pub n_obs: usize,
    pub model: Option<ElasticNetModel>,
    pub cv: Option<CvSummary>,
    /// Why the segment was not fitted.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub best_alpha: f64,
    pub best_lambda: f64,
    pub best_mse: f64,
    pub oof_r2: f64,
}

/// Minimum aligned rows for a segment to be fitted.
pub const MIN_SEGMENT_ROWS: usize = 12;

/// Tunes and fits one model per segment. Segments with fewer than
/// `MIN_SEGMENT_ROWS` aligned rows are skipped with a reason.
pub fn fit_segments(
    segments: &[MonthRange],
    predictors: &[ExogenousSeries],
    target: &ExogenousSeries,
    cfg: &CvConfig,
) -> Result<Vec<SegmentForecast>> {
    let full = DesignMatrix::from_series(predictors, target)?;
    segments
        .iter()
        .enumerate()
        .map(|(s, range)| {
            let rows: Vec<usize> = (0..full.n_rows()).filter(|i| range.contains(full.months[*i])).collect();
            let mut out = SegmentForecast {
                segment: s + 1,
                range: *range,
                n_obs: rows.len(),
                model: None,
                cv: None,
                skipped: None,
            };
            if rows.len() < MIN_SEGMENT_ROWS {
                out.skipped = Some(format!(
                    "{} aligned months, need at least {MIN_SEGMENT_ROWS}",
                    rows.len()
                ));
                return Ok(out);
            }
            let d = full.subset(&rows)?;
            let cv = cross_validate(&d, cfg)?;
            let model = fit_elastic_net_with(&d, cv.best_alpha, cv.best_lambda, &cfg.solver, None)?;
            out.cv = Some(CvSummary {
                best_alpha: cv.best_alpha,
                best_lambda: cv.best_lambda,
                best_mse: cv.best_mse,
                oof_r2: cv.oof_r2,
            });
            out.model = Some(model);
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPredictor {
    pub rank: usize,
    pub predictor: String,
    /// Standardized coefficient.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRanking {
    pub segment: usize,
    pub top: Vec<RankedPredictor>,
    /// Every coefficient is zero.
    pub null_model: bool,
}

/// Top `top_n` nonzero coefficients per fitted segment by magnitude.
pub fn coefficient_report(models: &[SegmentForecast], top_n: usize) -> Vec<CoefficientRanking> {
    models
        .iter()
        .filter_map(|s| s.model.as_ref().map(|m| (s.segment, m)))
        .map(|(segment, m)| {
            let mut idx: Vec<usize> = (0..m.coefficients.len()).filter(|k| m.coefficients[*k] != 0.0).collect();
            idx.sort_by(|a, b| m.coefficients[*b].abs().total_cmp(&m.coefficients[*a].abs()).then(a.cmp(b)));
            let top: Vec<RankedPredictor> = idx
                .iter()
                .take(top_n)
                .enumerate()
                .map(|(r, k)| RankedPredictor {
                    rank: r + 1,
                    predictor: m.all_names[m.kept[*k]].clone(),
                    coefficient: m.coefficients[*k],
                })
                .collect();
            CoefficientRanking {
                segment,
                null_model: top.is_empty(),
                top,
            }
        })
        .collect()
}

/// `segment,alpha,r2,mse,rmse` followed by `lambda,r2_oof,n_obs`.
pub fn performance_csv(models: &[SegmentForecast]) -> String {
    let mut out = String::from("segment,alpha,r2,mse,rmse,lambda,r2_oof,n_obs\n");
    for s in models {
        if let (Some(m), Some(cv)) = (&s.model, &s.cv) {
            let d = &m.diagnostics;
            out.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e},{:e},{}\n",
                s.segment, m.alpha, d.r2, d.mse, d.rmse, m.lambda, cv.oof_r2, s.n_obs
            ));
        }
    }
    out
}

/// `segment,rank,predictor,coefficient`; a null model is a single row with
/// rank 0 and predictor `null_model`.
pub fn coefficient_csv(rankings: &[CoefficientRanking]) -> String {
    let mut out = String::from("segment,rank,predictor,coefficient\n");
    for r in rankings {
        if r.null_model {
            out.push_str(&format!("{},0,null_model,0\n", r.segment));
        }
        for p in &r.top {
            out.push_str(&format!("{},{},{},{:e}\n", r.segment, p.rank, p.predictor, p.coefficient));
        }
    }
    out
}
