//! Retrospective kernel change-point detection.
//!
//! Segments minimize the total within-segment dispersion in the RKHS of a
//! Gaussian kernel. The optimum is found exactly by dynamic programming over
//! a precomputed table of 2-D prefix sums of the Gram matrix, so any
//! segment cost is an O(1) lookup. Memory is `(n + 1)^2` doubles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MIN_SIZE: usize = 12;
const MEDIAN_SUBSAMPLE: usize = 1000;

fn gaussian(a: f64, b: f64, bandwidth: f64) -> f64 {
    let d = a - b;
    (-d * d / (2.0 * bandwidth * bandwidth)).exp()
}

/// Within-segment kernel cost of `series[start..end]`:
/// `sum_i k(x_i, x_i) - (1 / len) sum_{i,j} k(x_i, x_j)`.
pub fn kernel_cost(series: &[f64], start: usize, end: usize, bandwidth: f64) -> Result<f64> {
    if start >= end || end > series.len() {
        return Err(Error::Domain(format!(
            "segment [{start}, {end}) is empty or outside a series of length {}",
            series.len()
        )));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let seg = &series[start..end];
    let len = seg.len() as f64;
    let mut cross = 0.0;
    for &a in seg {
        for &b in seg {
            cross += gaussian(a, b, bandwidth);
        }
    }
    Ok(len - cross / len)
}

/// Median of pairwise absolute differences over an evenly spaced subsample
/// of at most 1000 points.
pub fn median_heuristic(series: &[f64]) -> f64 {
    let n = series.len();
    let m = n.min(MEDIAN_SUBSAMPLE);
    let sample: Vec<f64> = (0..m).map(|i| series[i * n / m]).collect();
    let mut diffs = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            diffs.push((sample[i] - sample[j]).abs());
        }
    }
    if diffs.is_empty() {
        return 1.0;
    }
    diffs.sort_by(f64::total_cmp);
    let mid = diffs.len() / 2;
    let med = if diffs.len() % 2 == 0 {
        0.5 * (diffs[mid - 1] + diffs[mid])
    } else {
        diffs[mid]
    };
    if med > 0.0 {
        med
    } else {
        // more than half the pairs tie; fall back to the largest gap, or 1
        let max = diffs[diffs.len() - 1];
        if max > 0.0 {
            max
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Bandwidth {
    Fixed(f64),
    MedianHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum SegmentationMode {
    /// Exactly `K` breakpoints.
    FixedK(usize),
    /// Minimize cost + beta * (#breakpoints). `None` picks beta by the slope
    /// heuristic.
    Penalized(Option<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub mode: SegmentationMode,
    pub bandwidth: Bandwidth,
    pub min_size: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            mode: SegmentationMode::FixedK(6),
            bandwidth: Bandwidth::MedianHeuristic,
            min_size: DEFAULT_MIN_SIZE,
        }
    }
}

/// How the number of breakpoints was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Selection {
    FixedK { k: usize },
    /// `beta = c * ln(n)`.
    Penalized { beta: f64, c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    /// Exclusive segment ends, strictly increasing, excluding `n`.
    pub breakpoints: Vec<usize>,
    pub n: usize,
    pub min_size: usize,
    pub bandwidth: f64,
    pub selection: Selection,
    pub total_cost: f64,
}

impl Segmentation {
    /// `(start, end)` pairs tiling `[0, n)`.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.breakpoints.len() + 1);
        let mut start = 0;
        for &b in self.breakpoints.iter().chain(std::iter::once(&self.n)) {
            out.push((start, b));
            start = b;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev = 0;
        for &b in &self.breakpoints {
            if b <= prev || b >= self.n {
                return Err(Error::Validation(format!(
                    "breakpoints {:?} not strictly inside (0, {})",
                    self.breakpoints, self.n
                )));
            }
            prev = b;
        }
        if self.segments().iter().any(|(s, e)| e - s < self.min_size) {
            return Err(Error::Validation("segment shorter than min_size".into()));
        }
        Ok(())
    }
}

/// O(1) segment costs from 2-D prefix sums of the Gram matrix.
pub struct CostTable {
    n: usize,
    prefix: Vec<f64>,
}

impl CostTable {
    pub fn new(series: &[f64], bandwidth: f64) -> Self {
        let n = series.len();
        let w = n + 1;
        // row-wise cumulative Gram sums, one row per start index
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                let mut row = Vec::with_capacity(w);
                row.push(0.0);
                for j in 0..n {
                    acc += gaussian(series[i], series[j], bandwidth);
                    row.push(acc);
                }
                row
            })
            .collect();
        let mut prefix = vec![0.0; w * w];
        for i in 0..n {
            for j in 0..w {
                prefix[(i + 1) * w + j] = prefix[i * w + j] + rows[i][j];
            }
        }
        Self { n, prefix }
    }

    fn block(&self, s: usize, e: usize) -> f64 {
        let w = self.n + 1;
        self.prefix[e * w + e] - self.prefix[s * w + e] - self.prefix[e * w + s] + self.prefix[s * w + s]
    }

    pub fn cost(&self, s: usize, e: usize) -> f64 {
        let len = (e - s) as f64;
        (len - self.block(s, e) / len).max(0.0)
    }
}

/// Exact optimal costs with `k = 0..=k_max` breakpoints, plus backtracking
/// tables.
struct FixedKSolution {
    /// `best[k][e]`: optimal cost of `[0, e)` with `k` breakpoints.
    best: Vec<Vec<f64>>,
    arg: Vec<Vec<usize>>,
}

fn solve_fixed_k(table: &CostTable, n: usize, k_max: usize, m: usize) -> FixedKSolution {
    let mut best = vec![vec![f64::INFINITY; n + 1]; k_max + 1];
    let mut arg = vec![vec![0usize; n + 1]; k_max + 1];
    for e in m..=n {
        best[0][e] = table.cost(0, e);
    }
    for k in 1..=k_max {
        for e in (k + 1) * m..=n {
            let mut b = f64::INFINITY;
            let mut a = 0;
            for s in k * m..=e - m {
                let prev = best[k - 1][s];
                if !prev.is_finite() {
                    continue;
                }
                let v = prev + table.cost(s, e);
                if v < b {
                    b = v;
                    a = s;
                }
            }
            best[k][e] = b;
            arg[k][e] = a;
        }
    }
    FixedKSolution { best, arg }
}

fn backtrack(sol: &FixedKSolution, n: usize, k: usize) -> Vec<usize> {
    let mut bps = Vec::with_capacity(k);
    let mut e = n;
    for kk in (1..=k).rev() {
        let s = sol.arg[kk][e];
        bps.push(s);
        e = s;
    }
    bps.reverse();
    bps
}

/// Penalty from the slope heuristic: the optimal cost is roughly linear in
/// the number of breakpoints once all real changes are captured; beta is
/// twice the magnitude of that slope.
fn slope_heuristic_beta(costs: &[f64]) -> f64 {
    let k_max = costs.len() - 1;
    let lo = k_max / 2;
    let pts: Vec<(f64, f64)> = (lo..=k_max).map(|k| (k as f64, costs[k])).collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (-2.0 * slope).max(0.0)
}

fn solve_penalized(table: &CostTable, n: usize, m: usize, beta: f64) -> (Vec<usize>, f64) {
    // f[e]: best penalized cost of [0, e); ties go to fewer breakpoints
    let mut f = vec![f64::INFINITY; n + 1];
    let mut count = vec![usize::MAX; n + 1];
    let mut arg = vec![0usize; n + 1];
    f[0] = -beta;
    count[0] = 0;
    for e in m..=n {
        for s in (0..=e - m).filter(|&s| s == 0 || s >= m) {
            if !f[s].is_finite() {
                continue;
            }
            let v = f[s] + table.cost(s, e) + beta;
            let c = count[s] + usize::from(s > 0);
            let tol = 1e-12 * v.abs().max(1.0);
            if v < f[e] - tol || ((v - f[e]).abs() <= tol && c < count[e]) {
                f[e] = v;
                count[e] = c;
                arg[e] = s;
            }
        }
    }
    let mut bps = Vec::new();
    let mut e = n;
    while e > 0 {
        let s = arg[e];
        if s > 0 {
            bps.push(s);
        }
        e = s;
    }
    bps.reverse();
    let cost = f[n] - beta * bps.len() as f64;
    (bps, cost)
}

pub fn detect_changepoints(series: &[f64], config: &SegmentationConfig) -> Result<Segmentation> {
    let n = series.len();
    let m = config.min_size.max(1);
    if n < 2 * m {
        return Err(Error::InsufficientData(format!(
            "series of length {n} is shorter than 2 * min_size = {}",
            2 * m
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("series contains non-finite values".into()));
    }
    let bandwidth = match config.bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(Error::Domain(format!("bandwidth must be positive, got {h}"))),
        Bandwidth::MedianHeuristic => median_heuristic(series),
    };
    let table = CostTable::new(series, bandwidth);
    let feasible_max = n / m - 1;

    let (breakpoints, total_cost, selection) = match config.mode {
        SegmentationMode::FixedK(k) => {
            if k > feasible_max {
                return Err(Error::Infeasible(format!(
                    "{k} breakpoints need at least {} points with min_size {m}, have {n}",
                    (k + 1) * m
                )));
            }
            let sol = solve_fixed_k(&table, n, k, m);
            let cost = sol.best[k][n];
            (backtrack(&sol, n, k), cost, Selection::FixedK { k })
        }
        SegmentationMode::Penalized(beta) => {
            let beta = match beta {
                Some(b) if b >= 0.0 => b,
                Some(b) => return Err(Error::Domain(format!("penalty must be nonnegative, got {b}"))),
                None => {
                    let k_max = feasible_max.min(20);
                    let sol = solve_fixed_k(&table, n, k_max, m);
                    let costs: Vec<f64> = (0..=k_max).map(|k| sol.best[k][n]).collect();
                    slope_heuristic_beta(&costs)
                }
            };
            let (bps, cost) = solve_penalized(&table, n, m, beta);
            let c = beta / (n as f64).ln();
            (bps, cost, Selection::Penalized { beta, c })
        }
    };

    let seg = Segmentation {
        breakpoints,
        n,
        min_size: m,
        bandwidth,
        selection,
        total_cost,
    };
    seg.validate()?;
    Ok(seg)
}

/// Sum of direct kernel costs over the segments implied by `breakpoints`.
pub fn total_cost(series: &[f64], breakpoints: &[usize], bandwidth: f64) -> Result<f64> {
    let mut start = 0;
    let mut acc = 0.0;
    for &b in breakpoints.iter().chain(std::iter::once(&series.len())) {
        acc += kernel_cost(series, start, b, bandwidth)?;
        start = b;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub start: usize,
    pub end: usize,
    pub len: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator; 0 for a single point).
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

pub fn segment_summaries(series: &[f64], seg: &Segmentation) -> Result<Vec<SegmentSummary>> {
    if seg.n != series.len() {
        return Err(Error::Validation(format!(
            "segmentation covers {} points, series has {}",
            seg.n,
            series.len()
        )));
    }
    Ok(seg
        .segments()
        .into_iter()
        .map(|(start, end)| {
            let xs = &series[start..end];
            let len = xs.len();
            let mean = xs.iter().sum::<f64>() / len as f64;
            let var = if len > 1 {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (len - 1) as f64
            } else {
                0.0
            };
            SegmentSummary {
                start,
                end,
                len,
                mean,
                sd: var.sqrt(),
                min: xs.iter().cloned().fold(f64::INFINITY, f64::min),
                max: xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_segment_costs_nothing() {
        let xs = [3.5; 17];
        assert!(kernel_cost(&xs, 0, 17, 0.7).unwrap().abs() < 1e-12);
    }

    #[test]
    fn two_point_cost_by_hand() {
        let xs = [0.0, 1.0];
        let want = 1.0 - (-0.5f64).exp();
        assert!((kernel_cost(&xs, 0, 2, 1.0).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn empty_segment_is_domain_error() {
        assert!(matches!(kernel_cost(&[1.0, 2.0], 1, 1, 1.0), Err(Error::Domain(_))));
        assert!(matches!(kernel_cost(&[1.0, 2.0], 0, 3, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn table_matches_direct_cost() {
        let xs: Vec<f64> = (0..30).map(|i| ((i * 7919) % 13) as f64 * 0.3).collect();
        let t = CostTable::new(&xs, 0.9);
        for (s, e) in [(0, 30), (3, 9), (10, 11), (5, 28)] {
            let d = kernel_cost(&xs, s, e, 0.9).unwrap();
            assert!((t.cost(s, e) - d).abs() < 1e-10, "{s}..{e}");
        }
    }

    #[test]
    fn constant_series_penalized_has_no_breaks() {
        let xs = vec![2.0; 60];
        let cfg = SegmentationConfig {
            mode: SegmentationMode::Penalized(None),
            bandwidth: Bandwidth::MedianHeuristic,
            min_size: 5,
        };
        let seg = detect_changepoints(&xs, &cfg).unwrap();
        assert!(seg.breakpoints.is_empty());
    }

    #[test]
    fn too_many_breakpoints_is_infeasible() {
        let xs = vec![0.0; 30];
        let cfg = SegmentationConfig {
            mode: SegmentationMode::FixedK(3),
            bandwidth: Bandwidth::Fixed(1.0),
            min_size: 10,
        };
        assert!(matches!(detect_changepoints(&xs, &cfg), Err(Error::Infeasible(_))));
    }

    #[test]
    fn summaries_of_two_constant_blocks() {
        let mut xs = vec![1.0; 10];
        xs.extend(vec![2.0; 10]);
        let seg = Segmentation {
            breakpoints: vec![10],
            n: 20,
            min_size: 1,
            bandwidth: 1.0,
            selection: Selection::FixedK { k: 1 },
            total_cost: 0.0,
        };
        let s = segment_summaries(&xs, &seg).unwrap();
        assert_eq!((s[0].mean, s[1].mean), (1.0, 2.0));
        assert_eq!((s[0].sd, s[1].sd), (0.0, 0.0));
    }
}
