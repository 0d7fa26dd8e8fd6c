//! Binned maximum-likelihood fits of MLP mixtures, regime-count selection
//! and posterior classification.
//!
//! Observations are tallied into Rice-rule bins; the fit maximizes the
//! multinomial log-likelihood `n * sum_l phat_l ln p_l(theta)` where `p_l` is
//! the mixture mass of bin `l`. Parameters are optimized unconstrained as
//! `(mu, ln sigma, ln omega)` per component plus softmax logits for the
//! mixing weights.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos_index::FcixSeries;
use crate::error::{Error, Result};
use crate::mlp::{cdf_eval, ln_pdf, mlp_moments, MlpParams};
use crate::optimize::{minimize, Termination, TrustRegionOptions};
use crate::special::chi2_sf;

/// Placement of bin centers between the smallest and largest observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterSpacing {
    #[default]
    Linear,
    Log,
}

/// Histogram over `(0, inf)`. Bin `l` is the half-open interval
/// `(edges[l], edges[l + 1]]`; `edges[0] = 0` and `edges[L] = inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinScheme {
    #[serde(with = "edge_serde")]
    pub edges: Vec<f64>,
    pub centers: Vec<f64>,
    pub counts: Vec<u64>,
    pub proportions: Vec<f64>,
}

/// Edges as JSON numbers, with the unbounded top edge written as `"inf"`.
mod edge_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Edge {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let e: Vec<Edge> = v
            .iter()
            .map(|x| if x.is_finite() { Edge::Num(*x) } else { Edge::Text(x.to_string()) })
            .collect();
        e.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Edge>::deserialize(d)?
            .into_iter()
            .map(|e| match e {
                Edge::Num(x) => Ok(x),
                Edge::Text(t) => t.parse().map_err(serde::de::Error::custom),
            })
            .collect()
    }
}

/// Rice rule, `ceil(2 n^(1/3))`.
pub fn rice_bin_count(n: usize) -> usize {
    // the cube root of a perfect cube is exact in libm, the slack absorbs the rest
    (2.0 * (n as f64).cbrt() - 1e-9).ceil() as usize
}

pub fn build_bins(values: &[f64]) -> Result<BinScheme> {
    build_bins_with(values, CenterSpacing::Linear)
}

pub fn build_bins_with(values: &[f64], spacing: CenterSpacing) -> Result<BinScheme> {
    if values.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "binning needs at least 8 observations, got {}",
            values.len()
        )));
    }
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("observation {i} is {v}; values must be positive and finite")));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::InsufficientData("all observations are equal".into()));
    }
    let l = rice_bin_count(values.len());
    let step = |a: f64, b: f64, i: usize| a + (b - a) * i as f64 / (l - 1) as f64;
    let centers: Vec<f64> = match spacing {
        CenterSpacing::Linear => (0..l).map(|i| step(lo, hi, i)).collect(),
        CenterSpacing::Log => (0..l).map(|i| step(lo.ln(), hi.ln(), i).exp()).collect(),
    };
    let inner: Vec<f64> = centers
        .windows(2)
        .map(|w| match spacing {
            CenterSpacing::Linear => 0.5 * (w[0] + w[1]),
            CenterSpacing::Log => (w[0] * w[1]).sqrt(),
        })
        .collect();
    BinScheme::from_inner_edges(inner, centers, values)
}

impl BinScheme {
    /// Tallies `values` into bins split at `inner` (strictly increasing,
    /// positive). `centers` must have one more entry than `inner`.
    pub fn from_inner_edges(inner: Vec<f64>, centers: Vec<f64>, values: &[f64]) -> Result<Self> {
        if centers.len() != inner.len() + 1 {
            return Err(Error::Validation(format!(
                "{} centers for {} bins",
                centers.len(),
                inner.len() + 1
            )));
        }
        if inner.first().is_some_and(|e| *e <= 0.0) || inner.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("bin edges must be positive and strictly increasing".into()));
        }
        if values.is_empty() {
            return Err(Error::InsufficientData("no observations to bin".into()));
        }
        let mut counts = vec![0u64; centers.len()];
        for &v in values {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("value {v} outside (0, inf)")));
            }
            counts[inner.partition_point(|e| *e < v)] += 1;
        }
        let n = values.len() as f64;
        let proportions = counts.iter().map(|c| *c as f64 / n).collect();
        let mut edges = Vec::with_capacity(inner.len() + 2);
        edges.push(0.0);
        edges.extend(inner);
        edges.push(f64::INFINITY);
        Ok(Self {
            edges,
            centers,
            counts,
            proportions,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.centers.len()
    }

    pub fn n_obs(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin that `value` falls into.
    pub fn locate(&self, value: f64) -> usize {
        self.edges[1..self.edges.len() - 1].partition_point(|e| *e < value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    #[serde(flatten)]
    pub params: MlpParams,
    pub pi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub chi2: f64,
    pub dof: i64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub chi2: f64,
    pub dof: i64,
    pub p_value: f64,
    /// `n * sum_l phat_l ln p_l`.
    pub log_likelihood: f64,
    pub converged: bool,
    pub restarts: usize,
    pub restarts_converged: usize,
    /// Smallest pairwise `|mu_i - mu_j| / sqrt((sigma_i^2 + sigma_j^2) / 2)`;
    /// absent for one component.
    pub separation: Option<f64>,
    /// Two components nearly coincide or one carries almost no weight.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpMixtureModel {
    pub components: Vec<MixtureComponent>,
    pub fit: Option<FitDiagnostics>,
}

const SEPARATION_FLOOR: f64 = 0.25;
const WEIGHT_FLOOR: f64 = 1e-3;

impl MlpMixtureModel {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Validation("a mixture needs at least one component".into()));
        }
        for c in &components {
            c.params.validate()?;
            if !(c.pi > 0.0 && c.pi <= 1.0) {
                return Err(Error::Validation(format!("mixing weight {} outside (0, 1]", c.pi)));
            }
        }
        let total: f64 = components.iter().map(|c| c.pi).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!("mixing weights sum to {total}")));
        }
        Ok(Self { components, fit: None })
    }

    pub fn r(&self) -> usize {
        self.components.len()
    }

    /// `ln h(psi)`, or `-inf` where every component underflows.
    pub fn ln_density(&self, psi: f64) -> f64 {
        log_sum_exp(self.components.iter().map(|c| c.pi.ln() + ln_pdf(psi, &c.params)))
    }

    pub fn density(&self, psi: f64) -> f64 {
        self.ln_density(psi).exp()
    }

    pub fn cdf(&self, psi: f64) -> f64 {
        self.components.iter().map(|c| c.pi * cdf_eval(psi, &c.params).cdf).sum()
    }

    /// Component indices by ascending mean. Components without a finite
    /// mean sort last, then by `mu`.
    pub fn regime_order(&self) -> Vec<usize> {
        let key = |i: usize| {
            let p = &self.components[i].params;
            (mlp_moments(p).mean.value().unwrap_or(f64::INFINITY), p.mu)
        };
        let mut idx: Vec<usize> = (0..self.r()).collect();
        idx.sort_by(|a, b| key(*a).partial_cmp(&key(*b)).unwrap_or(std::cmp::Ordering::Equal));
        idx
    }

    /// Regime names in `regime_order`: LC, IC, HC for three components,
    /// otherwise R1, R2, ...
    pub fn regime_names(&self) -> Vec<String> {
        if self.r() == 3 {
            vec!["LC".into(), "IC".into(), "HC".into()]
        } else {
            (1..=self.r()).map(|i| format!("R{i}")).collect()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Export<'a> {
            #[serde(rename = "R")]
            r: usize,
            components: &'a [MixtureComponent],
            chi2: Option<f64>,
            dof: Option<i64>,
            p_value: Option<f64>,
            regime_names: Vec<String>,
            regime_order: Vec<usize>,
            fit: &'a Option<FitDiagnostics>,
        }
        let e = Export {
            r: self.r(),
            components: &self.components,
            chi2: self.fit.as_ref().map(|f| f.chi2),
            dof: self.fit.as_ref().map(|f| f.dof),
            p_value: self.fit.as_ref().map(|f| f.p_value),
            regime_names: self.regime_names(),
            regime_order: self.regime_order(),
            fit: &self.fit,
        };
        Ok(serde_json::to_string_pretty(&e)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Import {
            components: Vec<MixtureComponent>,
            fit: Option<FitDiagnostics>,
        }
        let i: Import = serde_json::from_str(text)?;
        let mut m = Self::new(i.components)?;
        m.fit = i.fit;
        Ok(m)
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Mass of one component in every bin, with the cdf gradient difference.
/// The upper tail uses survival-function differences.
fn component_bin_masses(scheme: &BinScheme, p: &MlpParams) -> (Vec<f64>, Vec<[f64; 3]>) {
    let evals: Vec<_> = scheme.edges.iter().map(|e| cdf_eval(*e, p)).collect();
    let l = scheme.n_bins();
    let mut mass = Vec::with_capacity(l);
    let mut grad = Vec::with_capacity(l);
    for i in 0..l {
        let (a, b) = (&evals[i], &evals[i + 1]);
        let m = if a.cdf < 0.5 { b.cdf - a.cdf } else { a.sf - b.sf };
        mass.push(m.max(0.0));
        grad.push([b.grad[0] - a.grad[0], b.grad[1] - a.grad[1], b.grad[2] - a.grad[2]]);
    }
    (mass, grad)
}

pub fn bin_probabilities(scheme: &BinScheme, model: &MlpMixtureModel) -> Vec<f64> {
    let mut p = vec![0.0; scheme.n_bins()];
    for c in &model.components {
        let (mass, _) = component_bin_masses(scheme, &c.params);
        for (acc, m) in p.iter_mut().zip(mass) {
            *acc += c.pi * m;
        }
    }
    p
}

pub fn bin_probability(scheme: &BinScheme, bin: usize, model: &MlpMixtureModel) -> Result<f64> {
    if bin >= scheme.n_bins() {
        return Err(Error::Domain(format!("bin {bin} out of range for {} bins", scheme.n_bins())));
    }
    let (lo, hi) = (scheme.edges[bin], scheme.edges[bin + 1]);
    Ok(model
        .components
        .iter()
        .map(|c| {
            let (a, b) = (cdf_eval(lo, &c.params), cdf_eval(hi, &c.params));
            let m = if a.cdf < 0.5 { b.cdf - a.cdf } else { a.sf - b.sf };
            c.pi * m.max(0.0)
        })
        .sum())
}

/// Degrees of freedom `L - 4R - 1`.
pub fn gof_dof(n_bins: usize, r: usize) -> i64 {
    n_bins as i64 - 4 * r as i64 - 1
}

/// G-statistic `2 n sum phat ln(phat / p)` with its chi-square upper tail.
pub fn gof_statistic(scheme: &BinScheme, model: &MlpMixtureModel) -> Result<GofResult> {
    let dof = gof_dof(scheme.n_bins(), model.r());
    if dof < 1 {
        return Err(Error::Domain(format!(
            "{} bins leave {dof} degrees of freedom for {} components",
            scheme.n_bins(),
            model.r()
        )));
    }
    let p = bin_probabilities(scheme, model);
    let mut s = 0.0;
    for (l, (&ph, &pl)) in scheme.proportions.iter().zip(&p).enumerate() {
        if ph > 0.0 {
            if pl <= 0.0 {
                return Err(Error::FitFailure {
                    message: format!("model assigns zero mass to occupied bin {l}"),
                    best_iterate: None,
                });
            }
            s += ph * (ph / pl).ln();
        }
    }
    let chi2 = (2.0 * scheme.n_obs() as f64 * s).max(0.0);
    Ok(GofResult {
        chi2,
        dof,
        p_value: chi2_sf(chi2, dof as usize),
    })
}

pub fn log_likelihood(scheme: &BinScheme, model: &MlpMixtureModel) -> f64 {
    let p = bin_probabilities(scheme, model);
    let n = scheme.n_obs() as f64;
    n * scheme
        .proportions
        .iter()
        .zip(&p)
        .filter(|(ph, _)| **ph > 0.0)
        .map(|(ph, pl)| ph * pl.ln())
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub restarts: usize,
    /// Gradient max-norm tolerance in the unconstrained parameterization.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            tol: 1e-8,
            max_iters: 3000,
            seed: 0,
        }
    }
}

/// One optimizer run of a multi-start fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRun {
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct MixtureFit {
    pub model: MlpMixtureModel,
    pub runs: Vec<RestartRun>,
}

// Plausibility box for the unconstrained coordinates; outside it the
// objective is infinite.
const LN_SIGMA_RANGE: (f64, f64) = (-9.0, 4.0);
const LN_OMEGA_RANGE: (f64, f64) = (-3.0, 6.5);
const LOGIT_RANGE: f64 = 30.0;
// A stalled run counts as converged when its gradient is this small.
const STALL_GTOL: f64 = 1e-5;

struct Objective<'a> {
    scheme: &'a BinScheme,
    r: usize,
}

impl Objective<'_> {
    fn unpack(&self, th: &[f64]) -> Option<(Vec<MlpParams>, Vec<f64>)> {
        let r = self.r;
        let mut params = Vec::with_capacity(r);
        for k in 0..r {
            let (mu, a, b) = (th[3 * k], th[3 * k + 1], th[3 * k + 2]);
            if !(mu.is_finite()
                && (LN_SIGMA_RANGE.0..=LN_SIGMA_RANGE.1).contains(&a)
                && (LN_OMEGA_RANGE.0..=LN_OMEGA_RANGE.1).contains(&b))
            {
                return None;
            }
            params.push(MlpParams {
                mu,
                sigma: a.exp(),
                omega: b.exp(),
            });
        }
        let mut logits = vec![0.0];
        logits.extend_from_slice(&th[3 * r..]);
        if logits.iter().any(|e| !(e.abs() <= LOGIT_RANGE)) {
            return None;
        }
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|e| (e - m).exp()).collect();
        let s: f64 = w.iter().sum();
        Some((params, w.into_iter().map(|v| v / s).collect()))
    }

    /// `-sum phat ln p` and its gradient.
    fn eval(&self, th: &[f64]) -> (f64, Vec<f64>) {
        let r = self.r;
        let dim = 4 * r - 1;
        let infeasible = (f64::INFINITY, vec![0.0; dim]);
        let Some((params, pi)) = self.unpack(th) else {
            return infeasible;
        };
        let l = self.scheme.n_bins();
        let comps: Vec<_> = params.iter().map(|p| component_bin_masses(self.scheme, p)).collect();
        let mut f = 0.0;
        let mut grad = vec![0.0; dim];
        for i in 0..l {
            let ph = self.scheme.proportions[i];
            if ph == 0.0 {
                continue;
            }
            let pl: f64 = (0..r).map(|k| pi[k] * comps[k].0[i]).sum();
            if !(pl > 0.0) {
                return infeasible;
            }
            f -= ph * pl.ln();
            let w = -ph / pl;
            for k in 0..r {
                let p = &params[k];
                let dg = &comps[k].1[i];
                grad[3 * k] += w * pi[k] * dg[0];
                grad[3 * k + 1] += w * pi[k] * dg[1] * p.sigma;
                grad[3 * k + 2] += w * pi[k] * dg[2] * p.omega;
            }
            // softmax: d pi_k / d eta_j = pi_k (delta_kj - pi_j), eta_0 fixed
            for j in 1..r {
                grad[3 * r + j - 1] += w * pi[j] * (comps[j].0[i] - pl);
            }
        }
        (f, grad)
    }
}

fn pack(components: &[MixtureComponent]) -> Vec<f64> {
    let mut th = Vec::with_capacity(4 * components.len() - 1);
    for c in components {
        th.extend([c.params.mu, c.params.sigma.ln(), c.params.omega.ln()]);
    }
    let base = components[0].pi.ln();
    th.extend(components[1..].iter().map(|c| c.pi.ln() - base));
    th
}

/// Weighted k-means on log bin centers, seeded k-means++ style.
fn weighted_kmeans(x: &[f64], w: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let total: f64 = w.iter().sum();
    let mut cent = Vec::with_capacity(k);
    let pick = |weights: &[f64], rng: &mut ChaCha8Rng| {
        let s: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * s;
        for (i, wi) in weights.iter().enumerate() {
            u -= wi;
            if u <= 0.0 && *wi > 0.0 {
                return i;
            }
        }
        weights.iter().rposition(|v| *v > 0.0).unwrap_or(0)
    };
    cent.push(x[pick(w, rng)]);
    while cent.len() < k {
        let d: Vec<f64> = x
            .iter()
            .zip(w)
            .map(|(xi, wi)| wi * cent.iter().map(|c| (xi - c).powi(2)).fold(f64::INFINITY, f64::min))
            .collect();
        if d.iter().sum::<f64>() <= 0.0 {
            // fewer distinct occupied centers than clusters
            let spread = x.last().unwrap() - x[0];
            cent.push(cent[0] + spread * (rng.random::<f64>() - 0.5));
        } else {
            cent.push(x[pick(&d, rng)]);
        }
    }
    let mut assign = vec![0usize; x.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (i, xi) in x.iter().enumerate() {
            let best = (0..k)
                .min_by(|a, b| (xi - cent[*a]).abs().total_cmp(&(xi - cent[*b]).abs()))
                .unwrap();
            if best != assign[i] {
                assign[i] = best;
                changed = true;
            }
        }
        for (c, ce) in cent.iter_mut().enumerate() {
            let (sw, sx) = x
                .iter()
                .zip(w)
                .zip(&assign)
                .filter(|(_, a)| **a == c)
                .fold((0.0, 0.0), |(sw, sx), ((xi, wi), _)| (sw + wi, sx + wi * xi));
            if sw > 0.0 {
                *ce = sx / sw;
            }
        }
        if !changed {
            break;
        }
    }
    debug_assert!(total > 0.0);
    assign
}

fn initial_components(scheme: &BinScheme, r: usize, rng: &mut ChaCha8Rng) -> Vec<MixtureComponent> {
    let x: Vec<f64> = scheme.centers.iter().map(|c| c.ln()).collect();
    let w = &scheme.proportions;
    let assign = weighted_kmeans(&x, w, r, rng);
    let spread = x.last().unwrap() - x[0];
    let bin_sd = spread / scheme.n_bins() as f64;
    let mut comps: Vec<MixtureComponent> = (0..r)
        .map(|c| {
            let (sw, sx, sxx) = x
                .iter()
                .zip(w)
                .zip(&assign)
                .filter(|(_, a)| **a == c)
                .fold((0.0, 0.0, 0.0), |(sw, sx, sxx), ((xi, wi), _)| {
                    (sw + wi, sx + wi * xi, sxx + wi * xi * xi)
                });
            let (mean, var) = if sw > 0.0 {
                let m = sx / sw;
                (m, (sxx / sw - m * m).max(0.0))
            } else {
                (x[0] + spread * rng.random::<f64>(), spread * spread / 16.0)
            };
            // ln psi = Z + T has mean mu + 1/omega and variance sigma^2 + 1/omega^2
            let omega = 2.0 + 4.0 * rng.random::<f64>();
            let sigma = (var - 1.0 / (omega * omega))
                .max((0.5 * bin_sd).powi(2))
                .max(0.05f64.powi(2))
                .sqrt()
                * (0.8 + 0.4 * rng.random::<f64>());
            MixtureComponent {
                params: MlpParams {
                    mu: mean - 1.0 / omega,
                    sigma,
                    omega,
                },
                pi: sw.max(0.02),
            }
        })
        .collect();
    let s: f64 = comps.iter().map(|c| c.pi).sum();
    for c in &mut comps {
        c.pi /= s;
    }
    comps
}

/// Best of `config.restarts` optimizer runs, components sorted by `mu`.
pub fn fit_mixture(scheme: &BinScheme, r: usize, config: &FitConfig) -> Result<MlpMixtureModel> {
    fit_mixture_detailed(scheme, r, config).map(|f| f.model)
}

/// As `fit_mixture`, also returning every restart's start and end values.
pub fn fit_mixture_detailed(scheme: &BinScheme, r: usize, config: &FitConfig) -> Result<MixtureFit> {
    if r == 0 {
        return Err(Error::Domain("regime count must be at least 1".into()));
    }
    if scheme.n_bins() <= 4 * r + 1 {
        return Err(Error::Domain(format!(
            "{} bins cannot support {r} components (need more than {})",
            scheme.n_bins(),
            4 * r + 1
        )));
    }
    if config.restarts == 0 {
        return Err(Error::Domain("at least one restart is required".into()));
    }
    let obj = Objective { scheme, r };
    let opts = TrustRegionOptions {
        gtol: config.tol,
        max_iters: config.max_iters,
        ..TrustRegionOptions::default()
    };

    let results: Vec<Option<(Vec<f64>, RestartRun)>> = (0..config.restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64);
            // a few draws in case the start is infeasible
            for _ in 0..10 {
                let th0 = pack(&initial_components(scheme, r, &mut rng));
                let f0 = obj.eval(&th0).0;
                if !f0.is_finite() {
                    continue;
                }
                let m = minimize(|t| obj.eval(t), &th0, &opts)?;
                let converged = match m.termination {
                    Termination::Gradient => true,
                    Termination::Stalled => m.grad_norm < STALL_GTOL,
                    Termination::MaxIterations => false,
                };
                return Some((
                    m.x,
                    RestartRun {
                        initial_objective: f0,
                        final_objective: m.f,
                        iterations: m.iterations,
                        converged,
                        grad_norm: m.grad_norm,
                    },
                ));
            }
            None
        })
        .collect();

    let runs: Vec<RestartRun> = results.iter().flatten().map(|(_, run)| run.clone()).collect();
    let best = results
        .iter()
        .flatten()
        .min_by(|a, b| a.1.final_objective.total_cmp(&b.1.final_objective));
    let Some((theta, best_run)) = best else {
        return Err(Error::FitFailure {
            message: format!("no feasible starting point found for R = {r}"),
            best_iterate: None,
        });
    };
    let restarts_converged = runs.iter().filter(|r| r.converged).count();
    if restarts_converged == 0 {
        return Err(Error::FitFailure {
            message: format!(
                "none of {} restarts converged for R = {r}; best objective {:.6e}, gradient {:.3e}",
                runs.len(),
                best_run.final_objective,
                best_run.grad_norm
            ),
            best_iterate: Some(theta.clone()),
        });
    }

    let (params, pi) = obj.unpack(theta).expect("accepted iterates are feasible");
    let mut components: Vec<MixtureComponent> = params
        .into_iter()
        .zip(pi)
        .map(|(params, pi)| MixtureComponent { params, pi })
        .collect();
    components.sort_by(|a, b| a.params.mu.total_cmp(&b.params.mu));
    let mut model = MlpMixtureModel { components, fit: None };
    let gof = gof_statistic(scheme, &model)?;
    let separation = separation(&model.components);
    let min_pi = model.components.iter().map(|c| c.pi).fold(1.0, f64::min);
    model.fit = Some(FitDiagnostics {
        chi2: gof.chi2,
        dof: gof.dof,
        p_value: gof.p_value,
        log_likelihood: log_likelihood(scheme, &model),
        converged: best_run.converged,
        restarts: runs.len(),
        restarts_converged,
        separation,
        degenerate: separation.is_some_and(|s| s < SEPARATION_FLOOR) || min_pi < WEIGHT_FLOOR,
    });
    Ok(MixtureFit { model, runs })
}

fn separation(c: &[MixtureComponent]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..c.len() {
        for j in i + 1..c.len() {
            let (a, b) = (&c[i].params, &c[j].params);
            let pooled = (0.5 * (a.sigma * a.sigma + b.sigma * b.sigma)).sqrt();
            let d = (a.mu - b.mu).abs() / pooled;
            best = Some(best.map_or(d, |x| x.min(d)));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub r: usize,
    pub model: Option<MlpMixtureModel>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSelection {
    pub chosen_r: usize,
    pub rule: SelectionRule,
    /// No candidate passed the test; `chosen_r` is the highest p-value fit.
    pub rejected: bool,
    pub alpha: f64,
    pub table: Vec<SelectionRow>,
}

impl RegimeSelection {
    pub fn chosen(&self) -> &MlpMixtureModel {
        self.table[self.chosen_r - 1].model.as_ref().expect("chosen row has a model")
    }
}

/// How `select_regime_count` picks among fits that pass the test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Largest p-value, smaller chi-square breaking ties.
    #[default]
    MaxPValue,
    /// Smallest passing R.
    Parsimonious,
}

/// Fits `R = 1..=r_max`; among fits with p-value above `alpha` picks the
/// largest p-value, smaller chi-square breaking ties. When none passes, the
/// largest p-value fit is returned flagged as rejected.
pub fn select_regime_count(
    scheme: &BinScheme,
    r_max: usize,
    alpha: f64,
    config: &FitConfig,
) -> Result<RegimeSelection> {
    select_regime_count_with(scheme, r_max, alpha, config, SelectionRule::MaxPValue)
}

pub fn select_regime_count_with(
    scheme: &BinScheme,
    r_max: usize,
    alpha: f64,
    config: &FitConfig,
    rule: SelectionRule,
) -> Result<RegimeSelection> {
    if r_max == 0 {
        return Err(Error::Domain("r_max must be at least 1".into()));
    }
    if scheme.n_bins() <= 4 * r_max + 1 {
        return Err(Error::Domain(format!(
            "{} bins cannot support r_max = {r_max}",
            scheme.n_bins()
        )));
    }
    let table: Vec<SelectionRow> = (1..=r_max)
        .map(|r| match fit_mixture(scheme, r, config) {
            Ok(m) => SelectionRow {
                r,
                model: Some(m),
                error: None,
            },
            Err(e) => SelectionRow {
                r,
                model: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let scored: Vec<(usize, f64, f64)> = table
        .iter()
        .filter_map(|row| {
            let f = row.model.as_ref()?.fit.as_ref()?;
            Some((row.r, f.p_value, f.chi2))
        })
        .collect();
    let better = |a: &&(usize, f64, f64), b: &&(usize, f64, f64)| {
        a.1.total_cmp(&b.1).then(b.2.total_cmp(&a.2)).then(b.0.cmp(&a.0))
    };
    let passing = match rule {
        SelectionRule::MaxPValue => scored.iter().filter(|s| s.1 > alpha).max_by(better),
        SelectionRule::Parsimonious => scored.iter().find(|s| s.1 > alpha),
    };
    let (chosen, rejected) = match passing {
        Some(s) => (s, false),
        None => match scored.iter().max_by(better) {
            Some(s) => (s, true),
            None => {
                return Err(Error::FitFailure {
                    message: format!("every candidate R = 1..={r_max} failed to fit"),
                    best_iterate: None,
                })
            }
        },
    };
    Ok(RegimeSelection {
        chosen_r: chosen.0,
        rule,
        rejected,
        alpha,
        table,
    })
}

/// Posterior regime weights. Columns follow `MlpMixtureModel::regime_order`,
/// so label `k` (1-based) is `names[k - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimePosterior {
    pub names: Vec<String>,
    pub labels: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
}

impl RegimePosterior {
    pub fn label_names(&self) -> Vec<&str> {
        self.labels.iter().map(|l| self.names[l - 1].as_str()).collect()
    }

    /// `date,fcix,label,p_<name>...`
    pub fn to_csv(&self, series: &FcixSeries) -> Result<String> {
        if series.len() != self.labels.len() {
            return Err(Error::Validation(format!(
                "{} posterior rows for a series of length {}",
                self.labels.len(),
                series.len()
            )));
        }
        let mut out = String::from("date,fcix,label");
        for n in &self.names {
            out.push_str(&format!(",p_{n}"));
        }
        out.push('\n');
        for t in 0..series.len() {
            out.push_str(&format!(
                "{},{:e},{}",
                series.timestamps[t],
                series.values[t],
                self.names[self.labels[t] - 1]
            ));
            for p in &self.probabilities[t] {
                out.push_str(&format!(",{p:e}"));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn classify(series: &FcixSeries, model: &MlpMixtureModel) -> Result<RegimePosterior> {
    posterior(&series.values, model, |t| format!("observation {t} ({})", series.timestamps[t]))
}

pub fn classify_values(values: &[f64], model: &MlpMixtureModel) -> Result<RegimePosterior> {
    posterior(values, model, |t| format!("observation {t}"))
}

fn posterior(values: &[f64], model: &MlpMixtureModel, name: impl Fn(usize) -> String) -> Result<RegimePosterior> {
    let order = model.regime_order();
    let ln_pi: Vec<f64> = order.iter().map(|i| model.components[*i].pi.ln()).collect();
    let mut labels = Vec::with_capacity(values.len());
    let mut probabilities = Vec::with_capacity(values.len());
    for (t, &v) in values.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{} is {v}; values must be positive", name(t))));
        }
        let terms: Vec<f64> = order
            .iter()
            .zip(&ln_pi)
            .map(|(i, lp)| lp + ln_pdf(v, &model.components[*i].params))
            .collect();
        let norm = log_sum_exp(terms.iter().copied());
        if !norm.is_finite() {
            return Err(Error::numerical(format!(
                "{} has zero density under every regime",
                name(t)
            )));
        }
        let row: Vec<f64> = terms.iter().map(|x| (x - norm).exp()).collect();
        let arg = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap();
        labels.push(arg + 1);
        probabilities.push(row);
    }
    Ok(RegimePosterior {
        names: model.regime_names(),
        labels,
        probabilities,
    })
}
