//! Reproducible end-to-end runs: stages in dependency order, each writing
//! plain JSON/CSV artifacts into the output directory, tied together by a
//! manifest of content hashes.
//!
//! A stage is skipped when the previous manifest holds the same stage key
//! (config section, seed and upstream artifact hashes) and its outputs are
//! unchanged on disk. All randomness derives from the run seed through
//! [`stage_seed`].

pub mod config;
pub mod plot;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::chaos_index::{fcix_pipeline, AlsOptions, FcixSeries};
use crate::error::{Error, Result};
use crate::market_data::{
    aggregate_monthly, load_exogenous, load_price_panel_with, month_index, month_start, ExogenousSeries, LoadOptions,
    RejectedAsset,
};
use crate::regime_dynamics::{from_indices, DynamicsReport, TransitionOptions};
use crate::regime_mixture::{
    build_bins_with, classify, fit_mixture, select_regime_count_with, BinScheme, FitConfig, MlpMixtureModel,
    RegimeSelection, SelectionRow,
};
use crate::segmentation::{detect_changepoints, segment_summaries, Segmentation};
use crate::volatility_forecast::{
    coefficient_csv, coefficient_report, fit_segments, performance_csv, CoefficientRanking, MonthRange,
    SegmentForecast,
};

pub use config::{sha256_hex, stage_seed, Frequency, MonthlySource, RunConfig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Fcix,
    Segment,
    Regimes,
    Dynamics,
    Forecast,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Fcix, Stage::Segment, Stage::Regimes, Stage::Dynamics, Stage::Forecast];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Fcix => "fcix",
            Stage::Segment => "segment",
            Stage::Regimes => "regimes",
            Stage::Dynamics => "dynamics",
            Stage::Forecast => "forecast",
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Fcix => &[],
            Stage::Segment | Stage::Regimes => &[Stage::Fcix],
            Stage::Dynamics => &[Stage::Fcix, Stage::Regimes],
            Stage::Forecast => &[Stage::Segment],
        }
    }

    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Fcix => &["fcix.json", "fcix.csv", "fcix_monthly.csv"],
            Stage::Segment => &["segmentation.json", "segments.csv"],
            Stage::Regimes => &["regimes.json", "posterior.csv"],
            Stage::Dynamics => &["dynamics.json"],
            Stage::Forecast => &["forecast.json", "performance.csv", "coefficients.csv"],
        }
    }

    fn enabled(self, cfg: &RunConfig) -> bool {
        let s = &cfg.stages;
        match self {
            Stage::Fcix => s.fcix,
            Stage::Segment => s.segment,
            Stage::Regimes => s.regimes,
            Stage::Dynamics => s.dynamics,
            Stage::Forecast => s.forecast,
        }
    }

    fn params(self, cfg: &RunConfig) -> String {
        let v = match self {
            Stage::Fcix => serde_json::to_string(&cfg.fcix),
            Stage::Segment => serde_json::to_string(&cfg.segment),
            Stage::Regimes => serde_json::to_string(&cfg.regimes),
            Stage::Dynamics => serde_json::to_string(&cfg.dynamics),
            Stage::Forecast => serde_json::to_string(&cfg.forecast),
        };
        v.expect("parameters serialize")
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    Cached,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub key: String,
    pub status: StageStatus,
    /// Input file name to sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to sha256.
    pub outputs: BTreeMap<String, String>,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn load(out_dir: &Path) -> Option<Self> {
        let text = std::fs::read_to_string(out_dir.join(MANIFEST_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn save(&self, out_dir: &Path) -> Result<()> {
        write_file(&out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)?.as_bytes())
    }
}

/// Wrapper stamped on every JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub stage: Stage,
    pub config_hash: String,
    pub stage_key: String,
    pub seed: u64,
    pub data: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcixArtifact {
    pub assets: Vec<String>,
    pub rejected: Vec<RejectedAsset>,
    pub n_days: usize,
    pub n_months: usize,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub monthly_source: MonthlySource,
    pub nonpositive_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDates {
    pub segment: usize,
    pub start: usize,
    pub end: usize,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub len: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentArtifact {
    pub frequency: Frequency,
    pub segmentation: Segmentation,
    pub segments: Vec<SegmentDates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeArtifact {
    #[serde(rename = "R")]
    pub r: usize,
    pub model: MlpMixtureModel,
    pub regime_names: Vec<String>,
    pub regime_order: Vec<usize>,
    pub selection: RegimeSelection,
    pub bins: BinScheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsArtifact {
    pub frequency: Frequency,
    #[serde(flatten)]
    pub report: DynamicsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastArtifact {
    pub target: String,
    pub predictors: Vec<String>,
    pub segments: Vec<SegmentForecast>,
    pub rankings: Vec<CoefficientRanking>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Recompute stages even when cached outputs are current.
    pub force: bool,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_file(path)?))
}

pub fn read_envelope<T: DeserializeOwned>(path: &Path) -> Result<Envelope<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    config_hash: String,
    stage_key: String,
}

impl Ctx<'_> {
    fn envelope<T: Serialize>(&self, stage: Stage, data: T) -> Result<Vec<u8>> {
        let e = Envelope {
            stage,
            config_hash: self.config_hash.clone(),
            stage_key: self.stage_key.clone(),
            seed: self.cfg.seed,
            data,
        };
        let mut s = serde_json::to_string_pretty(&e)?;
        s.push('\n');
        Ok(s.into_bytes())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Runs every enabled stage of `cfg` in dependency order.
pub fn run(cfg: &RunConfig, opts: RunOptions) -> Result<RunManifest> {
    cfg.validate()?;
    let out = cfg.out_dir.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let previous = RunManifest::load(out);
    let config_hash = cfg.hash();
    let mut manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: config_hash.clone(),
        seed: cfg.seed,
        stages: BTreeMap::new(),
    };
    // keep records of stages not run now so downstream checks can find them
    if let Some(prev) = &previous {
        for st in Stage::ALL {
            if !st.enabled(cfg) {
                if let Some(r) = prev.stages.get(st.name()) {
                    manifest.stages.insert(st.name().to_string(), r.clone());
                }
            }
        }
    }

    for stage in Stage::ALL.into_iter().filter(|s| s.enabled(cfg)) {
        let started = Instant::now();
        let inputs = stage_inputs(stage, cfg, &manifest, out)?;
        let key = stage_key(stage, cfg, &inputs);

        if !opts.force {
            if let Some(rec) = previous.as_ref().and_then(|p| p.stages.get(stage.name())) {
                if rec.key == key && rec.status != StageStatus::Failed && outputs_match(out, &rec.outputs) {
                    let mut rec = rec.clone();
                    rec.status = StageStatus::Cached;
                    rec.seconds = started.elapsed().as_secs_f64();
                    manifest.stages.insert(stage.name().to_string(), rec);
                    manifest.save(out)?;
                    continue;
                }
            }
        }

        let ctx = Ctx {
            cfg,
            out,
            config_hash: config_hash.clone(),
            stage_key: key.clone(),
        };
        let result = match stage {
            Stage::Fcix => run_fcix(&ctx),
            Stage::Segment => run_segment(&ctx),
            Stage::Regimes => run_regimes(&ctx),
            Stage::Dynamics => run_dynamics(&ctx),
            Stage::Forecast => run_forecast(&ctx),
        };
        let mut rec = StageRecord {
            key,
            status: StageStatus::Completed,
            inputs,
            outputs: BTreeMap::new(),
            seconds: 0.0,
            error: None,
        };
        match result {
            Ok(()) => {
                for name in stage.outputs() {
                    rec.outputs.insert(name.to_string(), file_hash(&out.join(name))?);
                }
                rec.seconds = started.elapsed().as_secs_f64();
                manifest.stages.insert(stage.name().to_string(), rec);
                manifest.save(out)?;
            }
            Err(e) => {
                rec.status = StageStatus::Failed;
                rec.error = Some(e.to_string());
                rec.seconds = started.elapsed().as_secs_f64();
                manifest.stages.insert(stage.name().to_string(), rec);
                manifest.save(out)?;
                return Err(e);
            }
        }
    }
    Ok(manifest)
}

fn outputs_match(out: &Path, outputs: &BTreeMap<String, String>) -> bool {
    !outputs.is_empty() && outputs.iter().all(|(name, h)| file_hash(&out.join(name)).is_ok_and(|x| &x == h))
}

/// Hashes of the raw inputs or upstream artifacts a stage reads. Upstream
/// artifacts must be recorded as completed in the manifest and unchanged on
/// disk.
fn stage_inputs(stage: Stage, cfg: &RunConfig, manifest: &RunManifest, out: &Path) -> Result<BTreeMap<String, String>> {
    let mut inputs = BTreeMap::new();
    match stage {
        Stage::Fcix => {
            inputs.insert("prices".to_string(), file_hash(&cfg.inputs.prices)?);
        }
        Stage::Forecast => {
            for (name, p) in [("vix", &cfg.inputs.vix), ("emv", &cfg.inputs.emv)] {
                let p = p.as_ref().ok_or_else(|| Error::Validation(format!("forecast needs inputs.{name}")))?;
                inputs.insert(name.to_string(), file_hash(p)?);
            }
        }
        _ => {}
    }
    for up in stage.upstream() {
        let rec = manifest.stages.get(up.name()).filter(|r| r.status != StageStatus::Failed);
        for name in up.outputs() {
            let path = out.join(name);
            let recorded = rec.and_then(|r| r.outputs.get(*name));
            match (recorded, file_hash(&path)) {
                (Some(h), Ok(actual)) if *h == actual => {
                    inputs.insert(name.to_string(), actual);
                }
                _ => {
                    return Err(Error::MissingDependency {
                        stage: up.name().to_string(),
                        path,
                    })
                }
            }
        }
    }
    Ok(inputs)
}

fn stage_key(stage: Stage, cfg: &RunConfig, inputs: &BTreeMap<String, String>) -> String {
    let material = serde_json::json!({
        "stage": stage.name(),
        "params": stage.params(cfg),
        "seed": cfg.seed,
        "inputs": inputs,
        "version": TOOL_VERSION,
    });
    sha256_hex(material.to_string().as_bytes())
}

fn load_series(out: &Path, name: &str, n_assets: usize) -> Result<FcixSeries> {
    let path = out.join(name);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    FcixSeries::from_csv(&text, n_assets)
}

fn load_fcix(out: &Path, frequency: Frequency) -> Result<FcixSeries> {
    let meta: Envelope<FcixArtifact> = read_envelope(&out.join("fcix.json"))?;
    let name = match frequency {
        Frequency::Daily => "fcix.csv",
        Frequency::Monthly => "fcix_monthly.csv",
    };
    load_series(out, name, meta.data.assets.len())
}

fn run_fcix(ctx: &Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let report = load_price_panel_with(
        &cfg.inputs.prices,
        LoadOptions {
            drop_nonpositive: cfg.fcix.drop_nonpositive,
        },
    )?;
    let als = AlsOptions {
        tol: cfg.fcix.tol,
        max_iters: cfg.fcix.max_iters,
    };
    let daily = fcix_pipeline(&report.panel, als)?;
    let monthly = match cfg.fcix.monthly_source {
        MonthlySource::Aggregate => {
            let (d, v) = aggregate_monthly(&daily.series.timestamps, &daily.series.values, cfg.fcix.monthly_aggregation);
            FcixSeries::new(d, v, daily.series.n_assets)?
        }
        MonthlySource::MonthEndPrices => {
            let s = fcix_pipeline(&report.panel.month_end(), als)?.series;
            let months = s.timestamps.iter().map(|d| month_start(month_index(*d))).collect();
            FcixSeries::new(months, s.values, s.n_assets)?
        }
    };
    let art = FcixArtifact {
        assets: report.panel.asset_ids().to_vec(),
        rejected: report.rejected,
        n_days: daily.series.len(),
        n_months: monthly.len(),
        iterations: daily.factors.iterations,
        converged: daily.factors.converged,
        residual: daily.factors.residual,
        monthly_source: cfg.fcix.monthly_source,
        nonpositive_days: daily.series.values.iter().filter(|v| **v <= 0.0).count(),
    };
    write_file(&ctx.path("fcix.csv"), daily.series.to_csv().as_bytes())?;
    write_file(&ctx.path("fcix_monthly.csv"), monthly.to_csv().as_bytes())?;
    write_file(&ctx.path("fcix.json"), &ctx.envelope(Stage::Fcix, art)?)
}

fn run_segment(ctx: &Ctx) -> Result<()> {
    let p = &ctx.cfg.segment;
    let series = load_fcix(ctx.out, p.frequency)?;
    let seg = detect_changepoints(&series.values, &p.to_config())?;
    let summaries = segment_summaries(&series.values, &seg)?;
    let segments: Vec<SegmentDates> = summaries
        .iter()
        .enumerate()
        .map(|(i, s)| SegmentDates {
            segment: i + 1,
            start: s.start,
            end: s.end,
            start_date: series.timestamps[s.start],
            end_date: series.timestamps[s.end - 1],
            len: s.len,
            mean: s.mean,
            sd: s.sd,
            min: s.min,
            max: s.max,
        })
        .collect();
    let mut csv = String::from("segment,start_date,end_date,len,mean,sd,min,max\n");
    for s in &segments {
        csv.push_str(&format!(
            "{},{},{},{},{:e},{:e},{:e},{:e}\n",
            s.segment, s.start_date, s.end_date, s.len, s.mean, s.sd, s.min, s.max
        ));
    }
    write_file(&ctx.path("segments.csv"), csv.as_bytes())?;
    let art = SegmentArtifact {
        frequency: p.frequency,
        segmentation: seg,
        segments,
    };
    write_file(&ctx.path("segmentation.json"), &ctx.envelope(Stage::Segment, art)?)
}

fn run_regimes(ctx: &Ctx) -> Result<()> {
    let p = &ctx.cfg.regimes;
    let series = load_fcix(ctx.out, Frequency::Daily)?;
    if let Some(t) = series.values.iter().position(|v| *v <= 0.0) {
        return Err(Error::Domain(format!(
            "chaos index is {} on {}; regime fits need positive values",
            series.values[t], series.timestamps[t]
        )));
    }
    let bins = build_bins_with(&series.values, p.spacing)?;
    let fit_cfg = FitConfig {
        restarts: p.restarts,
        tol: p.tol,
        max_iters: p.max_iters,
        seed: stage_seed(ctx.cfg.seed, "regimes"),
    };
    let selection = match p.fixed_r {
        Some(r) => {
            let model = fit_mixture(&bins, r, &fit_cfg)?;
            let rejected = model.fit.as_ref().is_some_and(|f| f.p_value <= p.alpha);
            let mut table: Vec<SelectionRow> = (1..r)
                .map(|k| SelectionRow {
                    r: k,
                    model: None,
                    error: Some("not fitted".into()),
                })
                .collect();
            table.push(SelectionRow {
                r,
                model: Some(model),
                error: None,
            });
            RegimeSelection {
                chosen_r: r,
                rule: p.rule,
                rejected,
                alpha: p.alpha,
                table,
            }
        }
        None => select_regime_count_with(&bins, p.r_max, p.alpha, &fit_cfg, p.rule)?,
    };
    let model = selection.chosen().clone();
    let posterior = classify(&series, &model)?;
    write_file(&ctx.path("posterior.csv"), posterior.to_csv(&series)?.as_bytes())?;
    let art = RegimeArtifact {
        r: model.r(),
        regime_names: model.regime_names(),
        regime_order: model.regime_order(),
        model,
        selection,
        bins,
    };
    write_file(&ctx.path("regimes.json"), &ctx.envelope(Stage::Regimes, art)?)
}

fn run_dynamics(ctx: &Ctx) -> Result<()> {
    let p = &ctx.cfg.dynamics;
    let regimes: Envelope<RegimeArtifact> = read_envelope(&ctx.path("regimes.json"))?;
    let series = load_fcix(ctx.out, p.frequency)?;
    if series.values.iter().any(|v| *v <= 0.0) {
        return Err(Error::Domain("regime labels need a positive chaos index".into()));
    }
    let posterior = classify(&series, &regimes.data.model)?;
    let labels: Vec<usize> = posterior.labels.iter().map(|l| l - 1).collect();
    let tm = from_indices(&labels, posterior.names.clone(), TransitionOptions { laplace: p.laplace })?;
    let art = DynamicsArtifact {
        frequency: p.frequency,
        report: DynamicsReport::build(&labels, &tm)?,
    };
    write_file(&ctx.path("dynamics.json"), &ctx.envelope(Stage::Dynamics, art)?)
}

/// Month ranges of the segments; a month shared by two segments goes to the
/// earlier one.
pub fn month_ranges(segments: &[SegmentDates]) -> Vec<MonthRange> {
    let mut out: Vec<MonthRange> = Vec::new();
    for s in segments {
        let mut start = month_index(s.start_date);
        if let Some(prev) = out.last() {
            start = start.max(month_index(prev.end) + 1);
        }
        out.push(MonthRange {
            start: month_start(start),
            end: month_start(month_index(s.end_date)),
        });
    }
    out
}

fn run_forecast(ctx: &Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let p = &cfg.forecast;
    let seg: Envelope<SegmentArtifact> = read_envelope(&ctx.path("segmentation.json"))?;
    let vix_all = load_exogenous(cfg.inputs.vix.as_ref().expect("validated"))?;
    let target: ExogenousSeries = match &p.target {
        Some(name) => vix_all
            .into_iter()
            .find(|s| &s.name == name)
            .ok_or_else(|| Error::Validation(format!("target column {name:?} not in the vix file")))?,
        None => vix_all.into_iter().next().expect("loader yields at least one column"),
    };
    let emv = load_exogenous(cfg.inputs.emv.as_ref().expect("validated"))?;
    let ranges = month_ranges(&seg.data.segments);
    let segments = fit_segments(&ranges, &emv, &target, &p.to_cv(stage_seed(cfg.seed, "forecast")))?;
    let rankings = coefficient_report(&segments, p.top_n);
    write_file(&ctx.path("performance.csv"), performance_csv(&segments).as_bytes())?;
    write_file(&ctx.path("coefficients.csv"), coefficient_csv(&rankings).as_bytes())?;
    let art = ForecastArtifact {
        target: target.name.clone(),
        predictors: emv.iter().map(|s| s.name.clone()).collect(),
        segments,
        rankings,
    };
    write_file(&ctx.path("forecast.json"), &ctx.envelope(Stage::Forecast, art)?)
}

/// Runs a single stage, reading upstream artifacts from the output directory.
pub fn run_stage(cfg: &RunConfig, stage: Stage, opts: RunOptions) -> Result<RunManifest> {
    let mut c = cfg.clone();
    c.stages = config::Stages {
        fcix: stage == Stage::Fcix,
        segment: stage == Stage::Segment,
        regimes: stage == Stage::Regimes,
        dynamics: stage == Stage::Dynamics,
        forecast: stage == Stage::Forecast,
    };
    run(&c, opts)
}
