//! Comparisons against reference results on the proprietary price panel
//! and the public VIX and EMV series. Skipped unless the three files are
//! present in `$FCIX_DATA_DIR` or in `crates/core/data`:
//!
//! - `prices.csv`: daily adjusted closes, one column per asset;
//! - `vix.csv`: `date,value` monthly VIX;
//! - `emv.csv`: `date,<category>...` monthly EMV trackers.
//!
//! Tolerances are loose because the reference numbers depend on asset
//! universe details and optimizer settings that cannot be matched exactly.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use chrono::NaiveDate;
use fcix_core::market_data::load_exogenous;
use fcix_core::pipeline::{
    read_envelope, run, DynamicsArtifact, Envelope, RegimeArtifact, RunConfig, RunOptions, SegmentArtifact,
};
use fcix_core::volatility_forecast::{fit_segments, CvConfig, MonthRange};

fn data_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("FCIX_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("data"));
    let present = ["prices.csv", "vix.csv", "emv.csv"].iter().all(|f| dir.join(f).is_file());
    if !present {
        eprintln!("skipped: no market data in {}", dir.display());
    }
    present.then_some(dir)
}

/// One full run shared by every test: monthly segmentation into seven
/// pieces, a fixed three-regime mixture on the daily index.
fn artifacts(dir: &Path) -> &'static Path {
    static OUT: OnceLock<tempfile::TempDir> = OnceLock::new();
    OUT.get_or_init(|| {
        let out = tempfile::tempdir().unwrap();
        let text = format!(
            r#"
seed = 1
out_dir = {out:?}

[inputs]
prices = {prices:?}
vix = {vix:?}
emv = {emv:?}

[segment]
frequency = "monthly"
mode = "fixed_k"
k = 6
min_size = 12

[regimes]
r_max = 3
fixed_r = 3

[dynamics]
frequency = "daily"
"#,
            out = out.path(),
            prices = dir.join("prices.csv"),
            vix = dir.join("vix.csv"),
            emv = dir.join("emv.csv"),
        );
        let cfg_path = out.path().join("config.toml");
        std::fs::write(&cfg_path, text).unwrap();
        run(&RunConfig::load(&cfg_path).unwrap(), RunOptions::default()).unwrap();
        out
    })
    .path()
}

fn month(y: i32, m: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, 1).unwrap()
}

fn reference_segments() -> Vec<MonthRange> {
    [
        ((1990, 1), (1993, 6)),
        ((1993, 7), (1998, 6)),
        ((1998, 7), (2002, 12)),
        ((2003, 1), (2007, 9)),
        ((2007, 10), (2009, 12)),
        ((2010, 1), (2019, 12)),
        ((2020, 1), (2023, 12)),
    ]
    .iter()
    .map(|((a, b), (c, d))| MonthRange {
        start: month(*a, *b),
        end: month(*c, *d),
    })
    .collect()
}

#[test]
fn segment_boundaries_near_reference() {
    let Some(dir) = data_dir() else { return };
    let seg: Envelope<SegmentArtifact> = read_envelope(&artifacts(&dir).join("segmentation.json")).unwrap();
    let ours: Vec<NaiveDate> = seg.data.segments.iter().skip(1).map(|s| s.start_date).collect();
    let theirs: Vec<NaiveDate> = reference_segments().iter().skip(1).map(|r| r.start).collect();
    assert_eq!(ours.len(), theirs.len());
    for (a, b) in ours.iter().zip(&theirs) {
        let months = (a.signed_duration_since(*b).num_days() as f64 / 30.44).abs();
        assert!(months <= 6.0, "boundary {a} vs {b}");
    }
}

#[test]
fn three_regime_fit_near_reference() {
    let Some(dir) = data_dir() else { return };
    let r: Envelope<RegimeArtifact> = read_envelope(&artifacts(&dir).join("regimes.json")).unwrap();
    let m = &r.data.model;
    let reference = [
        (-8.502, 0.218, 0.355),
        (-7.697, 0.308, 0.548),
        (-7.204, 0.573, 0.097),
    ];
    for (k, (mu, sigma, pi)) in m.regime_order().iter().zip(reference) {
        let c = &m.components[*k];
        assert!((c.params.mu - mu).abs() < 0.15, "mu {} vs {mu}", c.params.mu);
        assert!((c.params.sigma - sigma).abs() < 0.1, "sigma {} vs {sigma}", c.params.sigma);
        assert!((c.pi - pi).abs() < 0.1, "pi {} vs {pi}", c.pi);
    }
}

#[test]
fn transition_matrix_near_reference() {
    let Some(dir) = data_dir() else { return };
    let d: Envelope<DynamicsArtifact> = read_envelope(&artifacts(&dir).join("dynamics.json")).unwrap();
    let reference = [
        [0.483, 0.493, 0.024],
        [0.409, 0.565, 0.027],
        [0.500, 0.470, 0.030],
    ];
    for (row, want) in d.data.report.p.iter().zip(reference) {
        for (a, b) in row.iter().zip(want) {
            assert!((a - b).abs() < 0.05, "{:?}", d.data.report.p);
        }
    }
}

/// Lowercase stem used to match a reference predictor label to a column.
fn stem(label: &str) -> String {
    label.split_whitespace().next().unwrap().to_lowercase().chars().take(6).collect()
}

#[test]
fn segment_forecasts_near_reference() {
    let Some(dir) = data_dir() else { return };
    let vix = load_exogenous(&dir.join("vix.csv")).unwrap().remove(0);
    let emv = load_exogenous(&dir.join("emv.csv")).unwrap();
    let fits = fit_segments(&reference_segments(), &emv, &vix, &CvConfig::default()).unwrap();
    let r2 = [0.709, 0.638, 0.691, 0.696, 0.917, 0.702, 0.854];
    let leaders = [
        ["Disease", "Labor", "Commodities"],
        ["Macro News", "Regulation", "Policy"],
        ["Labor", "Macro News", "Fiscal"],
        ["Macro News", "Trade", "Elections"],
        ["Policy", "Macro News", "Fiscal"],
        ["Labor", "Fiscal", "Policy"],
        ["Disease", "Fiscal", "Elections"],
    ];
    for ((f, want), top3) in fits.iter().zip(r2).zip(leaders) {
        let cv = f.cv.expect("every reference segment has enough months");
        assert!((cv.oof_r2 - want).abs() < 0.15, "segment {}: R2 {} vs {want}", f.segment, cv.oof_r2);
        let m = f.model.as_ref().unwrap();
        let lead = (0..m.coefficients.len())
            .max_by(|a, b| m.coefficients[*a].abs().total_cmp(&m.coefficients[*b].abs()))
            .unwrap();
        let name = m.kept_names()[lead].to_lowercase();
        assert!(
            top3.iter().any(|l| name.contains(&stem(l))),
            "segment {}: leading predictor {name} not among {top3:?}",
            f.segment
        );
    }
}
