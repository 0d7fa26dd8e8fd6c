//! Declarative run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::market_data::MonthlyAggregation;
use crate::regime_mixture::{CenterSpacing, SelectionRule};
use crate::segmentation::{Bandwidth, SegmentationConfig, SegmentationMode};
use crate::volatility_forecast::{CvConfig, FoldScheme, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory; relative paths resolve against the config file.
    pub out_dir: PathBuf,
    pub inputs: Inputs,
    #[serde(default)]
    pub stages: Stages,
    #[serde(default)]
    pub fcix: FcixParams,
    #[serde(default)]
    pub segment: SegmentParams,
    #[serde(default)]
    pub regimes: RegimeParams,
    #[serde(default)]
    pub dynamics: DynamicsParams,
    #[serde(default)]
    pub forecast: ForecastParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub prices: PathBuf,
    pub vix: Option<PathBuf>,
    pub emv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stages {
    pub fcix: bool,
    pub segment: bool,
    pub regimes: bool,
    pub dynamics: bool,
    pub forecast: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self {
            fcix: true,
            segment: true,
            regimes: true,
            dynamics: true,
            forecast: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    #[default]
    Daily,
    Monthly,
}

/// How the monthly index is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonthlySource {
    /// Collapse the daily index within each month.
    #[default]
    Aggregate,
    /// Recompute the index from month-end prices.
    MonthEndPrices,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FcixParams {
    pub tol: f64,
    pub max_iters: usize,
    pub drop_nonpositive: bool,
    pub monthly_source: MonthlySource,
    pub monthly_aggregation: MonthlyAggregation,
}

impl Default for FcixParams {
    fn default() -> Self {
        Self {
            tol: crate::chaos_index::DEFAULT_TOL,
            max_iters: crate::chaos_index::DEFAULT_MAX_ITERS,
            drop_nonpositive: false,
            monthly_source: MonthlySource::Aggregate,
            monthly_aggregation: MonthlyAggregation::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentModeName {
    #[default]
    FixedK,
    Penalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentParams {
    pub frequency: Frequency,
    pub mode: SegmentModeName,
    /// Breakpoint count for `fixed_k`.
    pub k: usize,
    /// Penalty for `penalized`; absent means the slope heuristic.
    pub beta: Option<f64>,
    /// Kernel bandwidth; absent means the median heuristic.
    pub bandwidth: Option<f64>,
    pub min_size: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            frequency: Frequency::Monthly,
            mode: SegmentModeName::FixedK,
            k: 6,
            beta: None,
            bandwidth: None,
            min_size: crate::segmentation::DEFAULT_MIN_SIZE,
        }
    }
}

impl SegmentParams {
    pub fn to_config(&self) -> SegmentationConfig {
        SegmentationConfig {
            mode: match self.mode {
                SegmentModeName::FixedK => SegmentationMode::FixedK(self.k),
                SegmentModeName::Penalized => SegmentationMode::Penalized(self.beta),
            },
            bandwidth: match self.bandwidth {
                Some(b) => Bandwidth::Fixed(b),
                None => Bandwidth::MedianHeuristic,
            },
            min_size: self.min_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeParams {
    pub r_max: usize,
    pub alpha: f64,
    pub restarts: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub spacing: CenterSpacing,
    pub rule: SelectionRule,
    /// Skip selection and fit exactly this many regimes.
    pub fixed_r: Option<usize>,
}

impl Default for RegimeParams {
    fn default() -> Self {
        Self {
            r_max: 5,
            alpha: 0.05,
            restarts: 20,
            tol: 1e-8,
            max_iters: 3000,
            spacing: CenterSpacing::Linear,
            rule: SelectionRule::MaxPValue,
            fixed_r: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsParams {
    pub frequency: Frequency,
    pub laplace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastParams {
    pub alpha_grid: Vec<f64>,
    pub lambda_grid: Option<Vec<f64>>,
    pub n_lambda: usize,
    pub lambda_ratio: f64,
    pub folds: usize,
    pub fold_scheme: FoldScheme,
    pub top_n: usize,
    /// Column of the implied-volatility file to forecast; first column if absent.
    pub target: Option<String>,
}

impl Default for ForecastParams {
    fn default() -> Self {
        let cv = CvConfig::default();
        Self {
            alpha_grid: cv.alpha_grid,
            lambda_grid: None,
            n_lambda: cv.n_lambda,
            lambda_ratio: cv.lambda_ratio,
            folds: cv.folds,
            fold_scheme: cv.scheme,
            top_n: 5,
            target: None,
        }
    }
}

impl ForecastParams {
    pub fn to_cv(&self, seed: u64) -> CvConfig {
        CvConfig {
            alpha_grid: self.alpha_grid.clone(),
            lambda_grid: self.lambda_grid.clone(),
            n_lambda: self.n_lambda,
            lambda_ratio: self.lambda_ratio,
            folds: self.folds,
            scheme: self.fold_scheme,
            seed,
            solver: SolverOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path`; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.inputs.prices);
        if let Some(p) = self.inputs.vix.as_mut() {
            fix(p);
        }
        if let Some(p) = self.inputs.emv.as_mut() {
            fix(p);
        }
    }

    /// Parameter checks and existence of every input an enabled stage reads.
    pub fn validate(&self) -> Result<()> {
        let need = |p: &Path, what: &str| -> Result<()> {
            if p.is_file() {
                Ok(())
            } else {
                Err(Error::Validation(format!("{what} input {} does not exist", p.display())))
            }
        };
        if self.stages.fcix {
            need(&self.inputs.prices, "prices")?;
        }
        if self.stages.forecast {
            let vix = self.inputs.vix.as_ref().ok_or_else(|| Error::Validation("forecast needs inputs.vix".into()))?;
            let emv = self.inputs.emv.as_ref().ok_or_else(|| Error::Validation("forecast needs inputs.emv".into()))?;
            need(vix, "vix")?;
            need(emv, "emv")?;
        }
        if !(self.fcix.tol > 0.0) || self.fcix.max_iters == 0 {
            return Err(Error::Validation("fcix.tol must be positive and fcix.max_iters nonzero".into()));
        }
        if self.segment.min_size == 0 {
            return Err(Error::Validation("segment.min_size must be at least 1".into()));
        }
        if self.regimes.r_max == 0 || self.regimes.restarts == 0 {
            return Err(Error::Validation("regimes.r_max and regimes.restarts must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.regimes.alpha) {
            return Err(Error::Validation("regimes.alpha must lie in [0, 1]".into()));
        }
        if self.forecast.alpha_grid.is_empty() || self.forecast.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Validation("forecast.alpha_grid must be nonempty with entries in [0, 1]".into()));
        }
        if self.forecast.folds < 2 {
            return Err(Error::Validation("forecast.folds must be at least 2".into()));
        }
        Ok(())
    }

    /// sha256 of the canonical JSON form with every path blanked; inputs
    /// enter stage keys through their content hashes instead.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.inputs = Inputs {
            prices: PathBuf::new(),
            vix: c.inputs.vix.as_ref().map(|_| PathBuf::new()),
            emv: c.inputs.emv.as_ref().map(|_| PathBuf::new()),
        };
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Seed for one stage: the first eight bytes of `sha256(seed || label)`.
pub fn stage_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("eight bytes"))
}
