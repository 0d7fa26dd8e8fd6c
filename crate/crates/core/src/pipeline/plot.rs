//! Plot-ready tables derived from stage artifacts. No rendering happens
//! here; each table carries exactly the columns a plotting tool needs.

use std::fmt;
use std::str::FromStr;

use crate::chaos_index::FcixSeries;
use crate::error::{Error, Result};
use crate::mlp::mlp_quantile;
use crate::regime_mixture::{build_bins, BinScheme, MlpMixtureModel};

use super::{DynamicsArtifact, ForecastArtifact, RegimeArtifact, SegmentArtifact};

/// Points on the shared density grid.
pub const DENSITY_GRID_POINTS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    FcixSeries,
    Histogram,
    MixtureDensities,
    SegmentationOverlay,
    TransitionHeatmap,
    CoefficientBars,
}

impl PlotKind {
    pub const ALL: [PlotKind; 6] = [
        PlotKind::FcixSeries,
        PlotKind::Histogram,
        PlotKind::MixtureDensities,
        PlotKind::SegmentationOverlay,
        PlotKind::TransitionHeatmap,
        PlotKind::CoefficientBars,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::FcixSeries => "fcix_series",
            PlotKind::Histogram => "histogram",
            PlotKind::MixtureDensities => "mixture_densities",
            PlotKind::SegmentationOverlay => "segmentation_overlay",
            PlotKind::TransitionHeatmap => "transition_heatmap",
            PlotKind::CoefficientBars => "coefficient_bars",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown plot kind {s:?}")))
    }
}

/// A loaded stage output.
#[derive(Debug, Clone)]
pub enum Artifact {
    Fcix(FcixSeries),
    Segmentation { series: FcixSeries, segmentation: SegmentArtifact },
    Regimes(Box<RegimeArtifact>),
    Mixture(MlpMixtureModel),
    Dynamics(DynamicsArtifact),
    Forecast(ForecastArtifact),
}

impl Artifact {
    fn name(&self) -> &'static str {
        match self {
            Artifact::Fcix(_) => "fcix",
            Artifact::Segmentation { .. } => "segmentation",
            Artifact::Regimes(_) => "regimes",
            Artifact::Mixture(_) => "mixture model",
            Artifact::Dynamics(_) => "dynamics",
            Artifact::Forecast(_) => "forecast",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl PlotTable {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(|e| Error::Validation(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| Error::Validation(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Parses column `c` as numbers.
    pub fn column_f64(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[c].parse().unwrap_or(f64::NAN)).collect()
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn emit_plot_data(artifact: &Artifact, kind: PlotKind) -> Result<PlotTable> {
    match (kind, artifact) {
        (PlotKind::FcixSeries, Artifact::Fcix(s)) | (PlotKind::FcixSeries, Artifact::Segmentation { series: s, .. }) => {
            Ok(series_table(s))
        }
        (PlotKind::Histogram, Artifact::Fcix(s)) => Ok(histogram_table(&build_bins(&s.values)?)),
        (PlotKind::Histogram, Artifact::Regimes(r)) => Ok(histogram_table(&r.bins)),
        (PlotKind::MixtureDensities, Artifact::Regimes(r)) => density_table(&r.model),
        (PlotKind::MixtureDensities, Artifact::Mixture(m)) => density_table(m),
        (PlotKind::SegmentationOverlay, Artifact::Segmentation { series, segmentation }) => {
            overlay_table(series, segmentation)
        }
        (PlotKind::TransitionHeatmap, Artifact::Dynamics(d)) => Ok(heatmap_table(d)),
        (PlotKind::CoefficientBars, Artifact::Forecast(f)) => Ok(bars_table(f)),
        (k, a) => Err(Error::Domain(format!("{k} cannot be drawn from a {} artifact", a.name()))),
    }
}

fn series_table(s: &FcixSeries) -> PlotTable {
    let mut t = PlotTable::new(&["date", "fcix"]);
    for (d, v) in s.timestamps.iter().zip(&s.values) {
        t.rows.push(vec![d.to_string(), num(*v)]);
    }
    t
}

fn histogram_table(b: &BinScheme) -> PlotTable {
    let mut t = PlotTable::new(&["bin", "lower", "upper", "center", "count", "proportion"]);
    for l in 0..b.n_bins() {
        t.rows.push(vec![
            (l + 1).to_string(),
            num(b.edges[l]),
            num(b.edges[l + 1]),
            num(b.centers[l]),
            b.counts[l].to_string(),
            num(b.proportions[l]),
        ]);
    }
    t
}

/// Log-spaced grid covering all but a negligible tail of every component.
pub fn density_grid(model: &MlpMixtureModel, points: usize) -> Result<Vec<f64>> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for c in &model.components {
        lo = lo.min(mlp_quantile(1e-10, &c.params)?);
        hi = hi.max(mlp_quantile(1.0 - 1e-9, &c.params)?);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

fn density_table(model: &MlpMixtureModel) -> Result<PlotTable> {
    let names = model.regime_names();
    let order = model.regime_order();
    let mut cols = vec!["psi".to_string()];
    cols.extend(order.iter().map(|k| format!("density_{}", names[*k])));
    cols.push("total".into());
    let mut t = PlotTable { columns: cols, rows: Vec::new() };
    for psi in density_grid(model, DENSITY_GRID_POINTS)? {
        let mut row = vec![num(psi)];
        let mut total = 0.0;
        for k in &order {
            let c = &model.components[*k];
            let d = c.pi * crate::mlp::ln_pdf(psi, &c.params).exp();
            total += d;
            row.push(num(d));
        }
        row.push(num(total));
        t.rows.push(row);
    }
    Ok(t)
}

fn overlay_table(series: &FcixSeries, seg: &SegmentArtifact) -> Result<PlotTable> {
    if seg.segmentation.n != series.len() {
        return Err(Error::Alignment(format!(
            "segmentation covers {} points, series has {}",
            seg.segmentation.n,
            series.len()
        )));
    }
    let mut t = PlotTable::new(&["date", "fcix", "segment", "segment_mean"]);
    for s in &seg.segments {
        for i in s.start..s.end {
            t.rows.push(vec![
                series.timestamps[i].to_string(),
                num(series.values[i]),
                s.segment.to_string(),
                num(s.mean),
            ]);
        }
    }
    Ok(t)
}

fn heatmap_table(d: &DynamicsArtifact) -> PlotTable {
    let r = &d.report;
    let mut t = PlotTable::new(&["from", "to", "probability", "count"]);
    for (i, from) in r.states.iter().enumerate() {
        for (j, to) in r.states.iter().enumerate() {
            t.rows.push(vec![from.clone(), to.clone(), num(r.p[i][j]), r.counts[i][j].to_string()]);
        }
    }
    t
}

fn bars_table(f: &ForecastArtifact) -> PlotTable {
    let mut t = PlotTable::new(&["segment", "rank", "predictor", "coefficient"]);
    for r in &f.rankings {
        for p in &r.top {
            t.rows.push(vec![r.segment.to_string(), p.rank.to_string(), p.predictor.clone(), num(p.coefficient)]);
        }
    }
    t
}
