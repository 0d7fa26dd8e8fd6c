//! Reciprocal pairwise comparison matrices, their stacked tensor, the
//! positive rank-one approximation of that tensor, and the chaos index read
//! off the approximation's frontal slices.
//!
//! The tensor of return ratios is never materialized: slice `t` is the outer
//! product `r_t (1/r_t)^T`, so every contraction the alternating least-squares
//! sweep needs reduces to dot products of length `N`.

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{compute_returns, PricePanel, ReturnVector};

/// Floor applied to factor entries to keep them strictly positive.
pub const POSITIVITY_FLOOR: f64 = 1e-12;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 500;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 100_000;
/// Slices per work unit in the parallel reductions. Fixed so that the
/// floating-point summation order does not depend on the thread count.
const CHUNK: usize = 256;

/// Reciprocal pairwise comparison matrix `A_ij = r_i / r_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rpcm {
    pub timestamp: Option<NaiveDate>,
    pub entries: DMatrix<f64>,
}

impl Rpcm {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }
}

fn check_returns(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Domain("empty return vector".into()));
    }
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::Domain(format!(
            "return entry {i} is {v}; comparison matrices need strictly positive returns"
        )));
    }
    Ok(())
}

pub fn build_rpcm(r: &ReturnVector) -> Result<Rpcm> {
    let mut m = build_rpcm_from(&r.values)?;
    m.timestamp = Some(r.timestamp);
    Ok(m)
}

pub fn build_rpcm_from(values: &[f64]) -> Result<Rpcm> {
    check_returns(values)?;
    let n = values.len();
    let entries = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { values[i] / values[j] });
    Ok(Rpcm {
        timestamp: None,
        entries,
    })
}

/// Perron root and eigenvector of a strictly positive square matrix.
///
/// Power iteration stops once the Collatz-Wielandt bounds
/// `min_i (Mv)_i / v_i <= lambda <= max_i (Mv)_i / v_i` agree to `rel_tol`,
/// which brackets the answer rather than just watching successive iterates.
pub fn dominant_eigen(m: &DMatrix<f64>, rel_tol: f64, max_iters: usize) -> Result<(f64, Vec<f64>)> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::Domain(format!(
            "expected a nonempty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if let Some(v) = m.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Domain(format!("matrix entry {v} is not strictly positive")));
    }
    let mut v = vec![1.0 / n as f64; n];
    let mut w = vec![0.0; n];
    for _ in 0..max_iters {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = (0..n).map(|j| m[(i, j)] * v[j]).sum();
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let q = w[i] / v[i];
            lo = lo.min(q);
            hi = hi.max(q);
        }
        let s: f64 = w.iter().sum();
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / s;
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::numerical_with("power iteration diverged", v));
        }
        if hi - lo <= rel_tol * hi {
            return Ok((0.5 * (lo + hi), v));
        }
    }
    Err(Error::numerical_with(
        format!("power iteration did not converge in {max_iters} iterations"),
        v,
    ))
}

/// `(lambda_max - N) / (N - 1)` for a strictly positive `N x N` matrix.
pub fn consistency_index(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    if n < 2 {
        return Err(Error::Domain("consistency index needs N >= 2".into()));
    }
    let (lambda, _) = dominant_eigen(m, POWER_TOL, POWER_MAX_ITERS)?;
    Ok((lambda - n as f64) / (n as f64 - 1.0))
}

/// Access to the frontal slices `A_t` of an `N x N x T` tensor through the
/// products the rank-one fit needs.
pub trait FrontalSlices: Sync {
    fn n(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// `out += scale * A_t v`
    fn add_apply(&self, t: usize, v: &[f64], scale: f64, out: &mut [f64]);
    /// `out += scale * A_t^T v`
    fn add_apply_t(&self, t: usize, v: &[f64], scale: f64, out: &mut [f64]);
    /// `x^T A_t y`
    fn bilinear(&self, t: usize, x: &[f64], y: &[f64]) -> f64;
    /// `||A_t - z x y^T||_F^2` for unit-norm `x`, `y`.
    fn residual_sq(&self, t: usize, z: f64, x: &[f64], y: &[f64]) -> f64;
    fn materialize(&self, t: usize) -> DMatrix<f64>;
}

/// The stacked comparison tensor, stored as its generating return vectors.
#[derive(Debug, Clone)]
pub struct ComparisonTensor {
    timestamps: Vec<NaiveDate>,
    n: usize,
    returns: Vec<Vec<f64>>,
    reciprocals: Vec<Vec<f64>>,
}

impl ComparisonTensor {
    pub fn from_returns(returns: &[ReturnVector]) -> Result<Self> {
        let first = returns
            .first()
            .ok_or_else(|| Error::InsufficientData("no return vectors".into()))?;
        let n = first.values.len();
        for r in returns {
            if r.values.len() != n {
                return Err(Error::Validation(format!(
                    "return vector on {} has {} entries, expected {n}",
                    r.timestamp,
                    r.values.len()
                )));
            }
            check_returns(&r.values).map_err(|e| Error::Domain(format!("{} on {}", e, r.timestamp)))?;
        }
        Ok(Self {
            timestamps: returns.iter().map(|r| r.timestamp).collect(),
            n,
            reciprocals: returns
                .iter()
                .map(|r| r.values.iter().map(|v| 1.0 / v).collect())
                .collect(),
            returns: returns.iter().map(|r| r.values.clone()).collect(),
        })
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn slice(&self, t: usize) -> Rpcm {
        Rpcm {
            timestamp: Some(self.timestamps[t]),
            entries: self.materialize(t),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl FrontalSlices for ComparisonTensor {
    fn n(&self) -> usize {
        self.n
    }

    fn len(&self) -> usize {
        self.returns.len()
    }

    fn add_apply(&self, t: usize, v: &[f64], scale: f64, out: &mut [f64]) {
        let c = scale * dot(&self.reciprocals[t], v);
        for (o, a) in out.iter_mut().zip(&self.returns[t]) {
            *o += c * a;
        }
    }

    fn add_apply_t(&self, t: usize, v: &[f64], scale: f64, out: &mut [f64]) {
        let c = scale * dot(&self.returns[t], v);
        for (o, b) in out.iter_mut().zip(&self.reciprocals[t]) {
            *o += c * b;
        }
    }

    fn bilinear(&self, t: usize, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.returns[t]) * dot(&self.reciprocals[t], y)
    }

    fn residual_sq(&self, t: usize, z: f64, x: &[f64], y: &[f64]) -> f64 {
        // a b^T - z x y^T with a = alpha x + a_perp, b = beta y + b_perp splits
        // into four Frobenius-orthogonal terms; no cancellation near a perfect fit.
        let a = &self.returns[t];
        let b = &self.reciprocals[t];
        let alpha = dot(a, x);
        let beta = dot(b, y);
        let a_perp: f64 = a.iter().zip(x).map(|(ai, xi)| (ai - alpha * xi).powi(2)).sum();
        let b_perp: f64 = b.iter().zip(y).map(|(bi, yi)| (bi - beta * yi).powi(2)).sum();
        (alpha * beta - z).powi(2) + alpha * alpha * b_perp + beta * beta * a_perp + a_perp * b_perp
    }

    fn materialize(&self, t: usize) -> DMatrix<f64> {
        let a = &self.returns[t];
        let b = &self.reciprocals[t];
        DMatrix::from_fn(self.n, self.n, |i, j| if i == j { 1.0 } else { a[i] * b[j] })
    }
}

/// Explicitly stored `N x N x T` tensor, slice-major.
#[derive(Debug, Clone)]
pub struct DenseTensor {
    n: usize,
    slices: Vec<DMatrix<f64>>,
}

impl DenseTensor {
    pub fn new(slices: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = slices
            .first()
            .map(|s| s.nrows())
            .ok_or_else(|| Error::InsufficientData("tensor has no slices".into()))?;
        if slices.iter().any(|s| s.nrows() != n || s.ncols() != n) {
            return Err(Error::Validation("all slices must be N x N".into()));
        }
        if slices.iter().flat_map(|s| s.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("tensor has non-finite entries".into()));
        }
        Ok(Self { n, slices })
    }
}

impl FrontalSlices for DenseTensor {
    fn n(&self) -> usize {
        self.n
    }

    fn len(&self) -> usize {
        self.slices.len()
    }

    fn add_apply(&self, t: usize, v: &[f64], scale: f64, out: &mut [f64]) {
        let s = &self.slices[t];
        for (i, o) in out.iter_mut().enumerate() {
            *o += scale * (0..self.n).map(|j| s[(i, j)] * v[j]).sum::<f64>();
        }
    }

    fn add_apply_t(&self, t: usize, v: &[f64], scale: f64, out: &mut [f64]) {
        let s = &self.slices[t];
        for (j, o) in out.iter_mut().enumerate() {
            *o += scale * (0..self.n).map(|i| s[(i, j)] * v[i]).sum::<f64>();
        }
    }

    fn bilinear(&self, t: usize, x: &[f64], y: &[f64]) -> f64 {
        let s = &self.slices[t];
        (0..self.n)
            .map(|i| x[i] * (0..self.n).map(|j| s[(i, j)] * y[j]).sum::<f64>())
            .sum()
    }

    fn residual_sq(&self, t: usize, z: f64, x: &[f64], y: &[f64]) -> f64 {
        let s = &self.slices[t];
        let mut acc = 0.0;
        for j in 0..self.n {
            for i in 0..self.n {
                acc += (s[(i, j)] - z * x[i] * y[j]).powi(2);
            }
        }
        acc
    }

    fn materialize(&self, t: usize) -> DMatrix<f64> {
        self.slices[t].clone()
    }
}

/// Rank-one factors `z ∘ (x y^T)` with `||x|| = ||y|| = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOneFactors {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Frobenius norm of the approximation error.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual after initialization and after every sweep.
    pub residual_history: Vec<f64>,
}

/// Deterministic parallel sum of per-slice vector contributions.
fn reduce_slices<S, F>(tensor: &S, dim: usize, f: F) -> Vec<f64>
where
    S: FrontalSlices,
    F: Fn(usize, &mut [f64]) + Sync,
{
    let t_len = tensor.len();
    let n_chunks = t_len.div_ceil(CHUNK);
    let partials: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; dim];
            for t in c * CHUNK..((c + 1) * CHUNK).min(t_len) {
                f(t, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; dim];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

fn residual_norm<S: FrontalSlices>(tensor: &S, z: &[f64], x: &[f64], y: &[f64]) -> f64 {
    reduce_slices(tensor, 1, |t, acc| acc[0] += tensor.residual_sq(t, z[t], x, y))[0].sqrt()
}

fn project_unit(v: &mut [f64]) -> f64 {
    for e in v.iter_mut() {
        *e = e.max(POSITIVITY_FLOOR);
    }
    let s = norm(v);
    for e in v.iter_mut() {
        *e /= s;
    }
    s
}

/// Leading left (or right, with `transpose`) singular vector of the mode
/// unfolding, by power iteration on `sum_t A_t A_t^T`.
fn mode_singular_vector<S: FrontalSlices>(tensor: &S, transpose: bool) -> Vec<f64> {
    let n = tensor.n();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    for _ in 0..200 {
        let mut w = reduce_slices(tensor, n, |t, acc| {
            let mut tmp = vec![0.0; n];
            if transpose {
                tensor.add_apply(t, &v, 1.0, &mut tmp);
                tensor.add_apply_t(t, &tmp, 1.0, acc);
            } else {
                tensor.add_apply_t(t, &v, 1.0, &mut tmp);
                tensor.add_apply(t, &tmp, 1.0, acc);
            }
        });
        for e in w.iter_mut() {
            *e = e.abs();
        }
        let s = norm(&w);
        if !(s.is_finite() && s > 0.0) {
            break;
        }
        w.iter_mut().for_each(|e| *e /= s);
        let change: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if change < 1e-13 {
            break;
        }
    }
    project_unit(&mut v);
    v
}

fn optimal_z<S: FrontalSlices>(tensor: &S, x: &[f64], y: &[f64]) -> Vec<f64> {
    (0..tensor.len())
        .into_par_iter()
        .map(|t| tensor.bilinear(t, x, y).max(0.0))
        .collect()
}

/// Positive rank-one approximation by alternating least squares.
///
/// Each sweep solves exactly for `x`, then `y`, then `z` with the other two
/// fixed, projects `x`, `y` onto the positive orthant at [`POSITIVITY_FLOOR`]
/// and renormalizes them, moving the scale into `z`. Stops when the relative
/// change of the residual drops below `tol` or after `max_iters` sweeps.
pub fn fit_rank_one<S: FrontalSlices>(tensor: &S, tol: f64, max_iters: usize) -> Result<RankOneFactors> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    if tensor.is_empty() || tensor.n() == 0 {
        return Err(Error::InsufficientData("empty tensor".into()));
    }
    let n = tensor.n();
    let mut x = mode_singular_vector(tensor, false);
    let mut y = mode_singular_vector(tensor, true);
    let mut z = optimal_z(tensor, &x, &y);
    let mut residual = residual_norm(tensor, &z, &x, &y);
    // rounding in the residual is relative to the size of the data
    let scale = residual_norm(tensor, &vec![0.0; z.len()], &x, &y);
    let mut history = vec![residual];
    let mut converged = residual == 0.0;
    let mut iterations = 0;

    while !converged && iterations < max_iters {
        iterations += 1;
        let zz: f64 = z.iter().map(|v| v * v).sum();
        if zz == 0.0 {
            // All-zero slices: any unit x, y with z = 0 is optimal.
            converged = true;
            break;
        }

        let mut x_new = reduce_slices(tensor, n, |t, acc| tensor.add_apply(t, &y, z[t], acc));
        x_new.iter_mut().for_each(|e| *e /= zz);
        let sx = project_unit(&mut x_new);
        x = x_new;
        z.iter_mut().for_each(|e| *e *= sx);

        let zz: f64 = z.iter().map(|v| v * v).sum();
        let mut y_new = reduce_slices(tensor, n, |t, acc| tensor.add_apply_t(t, &x, z[t], acc));
        y_new.iter_mut().for_each(|e| *e /= zz);
        project_unit(&mut y_new);
        y = y_new;

        z = optimal_z(tensor, &x, &y);
        let r = residual_norm(tensor, &z, &x, &y);
        if !r.is_finite() || x.iter().chain(&y).chain(&z).any(|v| !v.is_finite()) {
            return Err(Error::numerical_with(
                format!("non-finite iterate in sweep {iterations}"),
                z,
            ));
        }
        // Exact block minimization cannot increase the residual; allow for rounding only.
        let slack = 1e-10 * residual + 1e-12 * scale + 1e-300;
        if r > residual + slack {
            return Err(Error::numerical(format!(
                "residual increased from {residual} to {r} in sweep {iterations}"
            )));
        }
        let prev = residual;
        residual = r.min(residual);
        history.push(r);
        if residual == 0.0 || (prev - r).abs() <= tol * prev {
            converged = true;
        }
    }

    Ok(RankOneFactors {
        x,
        y,
        z,
        residual,
        iterations,
        converged,
        residual_history: history,
    })
}

/// Chaos index series `psi_t = (lambda_max(t) - N) / (N - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcixSeries {
    pub timestamps: Vec<NaiveDate>,
    pub values: Vec<f64>,
    pub n_assets: usize,
}

impl FcixSeries {
    pub fn new(timestamps: Vec<NaiveDate>, values: Vec<f64>, n_assets: usize) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::Validation(format!(
                "{} timestamps for {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("chaos index contains non-finite values".into()));
        }
        Ok(Self {
            timestamps,
            values,
            n_assets,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("date,fcix\n");
        for (d, v) in self.timestamps.iter().zip(&self.values) {
            s.push_str(&format!("{},{}\n", d.format("%Y-%m-%d"), v));
        }
        s
    }

    /// Parses the `date,fcix` export.
    pub fn from_csv(text: &str, n_assets: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["date", "fcix"] {
            return Err(Error::Parse {
                row: 1,
                column: 1,
                message: "expected header `date,fcix`".into(),
            });
        }
        let mut ts = Vec::new();
        let mut vs = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = r + 2;
            ts.push(crate::market_data::parse_date(&rec[0]).ok_or_else(|| Error::Parse {
                row,
                column: 1,
                message: format!("bad date {:?}", &rec[0]),
            })?);
            vs.push(rec[1].parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: 2,
                message: format!("not a number: {:?}", &rec[1]),
            })?);
        }
        Self::new(ts, vs, n_assets)
    }
}

/// Closed-form chaos index of the rank-one slices. Because slice `t` is
/// `z_t x y^T`, its Perron root is `z_t <x, y>`; a handful of slices are also
/// materialized and checked against power iteration.
pub fn compute_fcix(
    factors: &RankOneFactors,
    n_assets: usize,
    timestamps: &[NaiveDate],
) -> Result<FcixSeries> {
    if n_assets < 2 {
        return Err(Error::Domain("chaos index needs at least 2 assets".into()));
    }
    if factors.x.len() != n_assets || factors.y.len() != n_assets {
        return Err(Error::Validation("factor length does not match asset count".into()));
    }
    if factors.z.len() != timestamps.len() {
        return Err(Error::Validation("factor z length does not match timestamps".into()));
    }
    let n = n_assets as f64;
    let xy = dot(&factors.x, &factors.y);
    let lambda: Vec<f64> = factors.z.iter().map(|z| z * xy).collect();

    let t_len = lambda.len();
    let mut sample = vec![0, t_len / 2, t_len.saturating_sub(1)];
    sample.dedup();
    for t in sample {
        if lambda[t] <= 0.0 {
            continue;
        }
        let m = DMatrix::from_fn(n_assets, n_assets, |i, j| factors.z[t] * factors.x[i] * factors.y[j]);
        let (pi, _) = dominant_eigen(&m, 1e-13, POWER_MAX_ITERS)?;
        if (pi - lambda[t]).abs() > 1e-9 * lambda[t].max(1.0) {
            return Err(Error::numerical(format!(
                "slice {t}: closed-form eigenvalue {} disagrees with power iteration {pi}",
                lambda[t]
            )));
        }
    }
    FcixSeries::new(
        timestamps.to_vec(),
        lambda.iter().map(|l| (l - n) / (n - 1.0)).collect(),
        n_assets,
    )
}

#[derive(Debug, Clone, Copy)]
pub struct AlsOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for AlsOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FcixRun {
    pub series: FcixSeries,
    pub factors: RankOneFactors,
}

/// Prices to chaos index: returns, comparison tensor, rank-one fit, index.
pub fn fcix_pipeline(panel: &PricePanel, opts: AlsOptions) -> Result<FcixRun> {
    if panel.n_times() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 dates, have {}",
            panel.n_times()
        )));
    }
    if panel.n_assets() < 2 {
        return Err(Error::InsufficientData("need at least 2 assets".into()));
    }
    let returns = compute_returns(panel)?;
    let tensor = ComparisonTensor::from_returns(&returns)?;
    let factors = fit_rank_one(&tensor, opts.tol, opts.max_iters)?;
    let series = compute_fcix(&factors, panel.n_assets(), tensor.timestamps())?;
    Ok(FcixRun { series, factors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rpcm_examples() {
        let m = build_rpcm_from(&[1.0, 1.0, 1.0]).unwrap();
        assert!(m.entries.iter().all(|v| *v == 1.0));
        let m = build_rpcm_from(&[2.0, 1.0]).unwrap();
        assert_eq!(m.entries, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, 1.0]));
        assert!(matches!(build_rpcm_from(&[2.0, 0.0, 1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn transitive_matrix_is_consistent() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 4.0, 0.5, 1.0, 2.0, 0.25, 0.5, 1.0]);
        assert!(consistency_index(&m).unwrap().abs() < 1e-9);
    }

    #[test]
    fn consistency_rejects_small_or_nonpositive() {
        assert!(consistency_index(&DMatrix::from_element(1, 1, 1.0)).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
        assert!(matches!(consistency_index(&m), Err(Error::Domain(_))));
    }

    #[test]
    fn single_flat_slice() {
        let r = vec![ReturnVector {
            timestamp: NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
            values: vec![1.0, 1.0],
        }];
        let t = ComparisonTensor::from_returns(&r).unwrap();
        let f = fit_rank_one(&t, 1e-8, 100).unwrap();
        assert!((f.x[0] - f.x[1]).abs() < 1e-15 && (f.y[0] - f.y[1]).abs() < 1e-15);
        assert!(f.z[0] >= 0.0);
        assert!(f.residual < 1e-14);
    }

    #[test]
    fn fcix_closed_form_arithmetic() {
        let ts = vec![NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(); 1];
        let u = 1.0 / 3f64.sqrt();
        let mk = |z: f64| RankOneFactors {
            x: vec![u; 3],
            y: vec![u; 3],
            z: vec![z],
            residual: 0.0,
            iterations: 0,
            converged: true,
            residual_history: vec![],
        };
        // <x, y> = 1
        assert!(compute_fcix(&mk(3.0), 3, &ts).unwrap().values[0].abs() < 1e-12);
        assert!((compute_fcix(&mk(5.0), 3, &ts).unwrap().values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tensor_rejects_nonpositive_returns() {
        let r = vec![ReturnVector {
            timestamp: NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
            values: vec![1.0, 0.0],
        }];
        assert!(matches!(ComparisonTensor::from_returns(&r), Err(Error::Domain(_))));
    }
}
