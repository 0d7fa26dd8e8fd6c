//! `fcix` command-line front end.
//!
//! Every verb reads the same TOML run config; `--seed` and `--out` override
//! the corresponding keys. Exit codes: 0 success, 2 invalid input or
//! config, 3 numerical or fit failure, 4 missing upstream artifact.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fcix_core::chaos_index::FcixSeries;
use fcix_core::pipeline::plot::{emit_plot_data, Artifact, PlotKind};
use fcix_core::pipeline::{
    read_envelope, run, run_stage, DynamicsArtifact, Envelope, FcixArtifact, ForecastArtifact, RegimeArtifact,
    RunConfig, RunManifest, RunOptions, SegmentArtifact, Stage,
};
use fcix_core::{Error, Result};

#[derive(Parser)]
#[command(name = "fcix", version, about = "Financial Chaos Index pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Recompute even when cached artifacts are current.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build the daily and monthly chaos index from the price panel.
    Fcix(Common),
    /// Kernel change-point segmentation of the index.
    Segment(Common),
    /// Select and fit the regime mixture, then classify each day.
    FitRegimes(Common),
    /// Regime transition matrix and stationary distribution.
    Dynamics(Common),
    /// Segment-wise elastic-net forecasts of implied volatility.
    Forecast(Common),
    /// Every enabled stage in dependency order.
    Run(Common),
    /// Write a plot-ready CSV table for one artifact.
    PlotData {
        #[command(flatten)]
        common: Common,
        /// fcix_series, histogram, mixture_densities, segmentation_overlay,
        /// transition_heatmap or coefficient_bars.
        #[arg(long)]
        kind: PlotKind,
        /// Stage whose artifact to read; defaults to the natural one for the kind.
        #[arg(long)]
        from: Option<Stage>,
        /// Destination file; stdout when absent.
        #[arg(long)]
        dest: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn summarize(m: &RunManifest) {
    for (name, rec) in &m.stages {
        eprintln!("{name:<9} {:?} {:.2}s", rec.status, rec.seconds);
    }
}

fn default_stage(kind: PlotKind) -> Stage {
    match kind {
        PlotKind::FcixSeries => Stage::Fcix,
        PlotKind::Histogram | PlotKind::MixtureDensities => Stage::Regimes,
        PlotKind::SegmentationOverlay => Stage::Segment,
        PlotKind::TransitionHeatmap => Stage::Dynamics,
        PlotKind::CoefficientBars => Stage::Forecast,
    }
}

fn need(out: &Path, stage: Stage, file: &str) -> Result<PathBuf> {
    let p = out.join(file);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::MissingDependency {
            stage: stage.name().to_string(),
            path: p,
        })
    }
}

fn load_series(out: &Path, name: &str) -> Result<FcixSeries> {
    let meta: Envelope<FcixArtifact> = read_envelope(&need(out, Stage::Fcix, "fcix.json")?)?;
    let p = need(out, Stage::Fcix, name)?;
    let text = std::fs::read_to_string(&p).map_err(|e| Error::Io { path: p, source: e })?;
    FcixSeries::from_csv(&text, meta.data.assets.len())
}

fn load_artifact(out: &Path, stage: Stage) -> Result<Artifact> {
    Ok(match stage {
        Stage::Fcix => Artifact::Fcix(load_series(out, "fcix.csv")?),
        Stage::Segment => {
            let seg: Envelope<SegmentArtifact> = read_envelope(&need(out, stage, "segmentation.json")?)?;
            let file = match seg.data.frequency {
                fcix_core::pipeline::Frequency::Daily => "fcix.csv",
                fcix_core::pipeline::Frequency::Monthly => "fcix_monthly.csv",
            };
            Artifact::Segmentation {
                series: load_series(out, file)?,
                segmentation: seg.data,
            }
        }
        Stage::Regimes => {
            let r: Envelope<RegimeArtifact> = read_envelope(&need(out, stage, "regimes.json")?)?;
            Artifact::Regimes(Box::new(r.data))
        }
        Stage::Dynamics => {
            let d: Envelope<DynamicsArtifact> = read_envelope(&need(out, stage, "dynamics.json")?)?;
            Artifact::Dynamics(d.data)
        }
        Stage::Forecast => {
            let f: Envelope<ForecastArtifact> = read_envelope(&need(out, stage, "forecast.json")?)?;
            Artifact::Forecast(f.data)
        }
    })
}

fn execute(cli: Cli) -> Result<()> {
    let (common, stage) = match &cli.command {
        Command::Fcix(c) => (c, Some(Stage::Fcix)),
        Command::Segment(c) => (c, Some(Stage::Segment)),
        Command::FitRegimes(c) => (c, Some(Stage::Regimes)),
        Command::Dynamics(c) => (c, Some(Stage::Dynamics)),
        Command::Forecast(c) => (c, Some(Stage::Forecast)),
        Command::Run(c) => (c, None),
        Command::PlotData { common, kind, from, dest } => {
            let cfg = load_config(common)?;
            let artifact = load_artifact(&cfg.out_dir, from.unwrap_or(default_stage(*kind)))?;
            let csv = emit_plot_data(&artifact, *kind)?.to_csv()?;
            return match dest {
                Some(p) => std::fs::write(p, csv).map_err(|e| Error::Io {
                    path: p.clone(),
                    source: e,
                }),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            };
        }
    };
    let cfg = load_config(common)?;
    let opts = RunOptions { force: common.force };
    let manifest = match stage {
        Some(s) => run_stage(&cfg, s, opts)?,
        None => run(&cfg, opts)?,
    };
    summarize(&manifest);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
