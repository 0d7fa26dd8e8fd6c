//! Seeded synthetic inputs: a small price panel whose volatility switches
//! between three regimes, monthly uncertainty-tracker categories, and a
//! next-month implied-volatility series driven by them. Volatility levels
//! and forecast coefficients both change halfway through.

use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::market_data::{aggregate_monthly, write_exogenous, ExogenousSeries, MonthlyAggregation, PricePanel};

pub const FIXTURE_SEED: u64 = 20_240_101;
pub const CATEGORIES: [&str; 4] = ["Macroeconomic", "Disease", "Trade policy", "Elections"];

#[derive(Debug, Clone)]
pub struct Fixture {
    pub prices: PricePanel,
    pub vix: ExogenousSeries,
    pub emv: Vec<ExogenousSeries>,
}

/// Weekdays in `[start, start + years)`.
fn business_days(start: NaiveDate, years: i32) -> Vec<NaiveDate> {
    let end = NaiveDate::from_ymd_opt(start.year() + years, start.month(), start.day()).expect("valid date");
    let mut d = start;
    let mut out = Vec::new();
    while d < end {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

pub fn synthetic_fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let days = business_days(NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(), 6);
    let n_assets = 5;
    let vols: [f64; 3] = [0.006, 0.012, 0.03];
    let stay = [0.985, 0.97, 0.9];
    let z = Normal::new(0.0, 1.0).unwrap();

    let mut regime = 0usize;
    let mut prices = vec![vec![0.0; days.len()]; n_assets];
    let mut level: Vec<f64> = (0..n_assets).map(|i| 20.0 + 15.0 * i as f64).collect();
    for t in 0..days.len() {
        if t > 0 {
            if rng.random::<f64>() > stay[regime] {
                regime = if regime == 0 { 1 } else if rng.random::<f64>() < 0.7 { regime - 1 } else { (regime + 1).min(2) };
            }
            let common: f64 = z.sample(&mut rng);
            let scale = if t < days.len() / 2 { 1.0 } else { 1.6 };
            for l in level.iter_mut() {
                let e: f64 = 0.5 * common + 0.866 * z.sample(&mut rng);
                *l *= (0.0002 + scale * vols[regime] * e).exp();
            }
        }
        for (i, l) in level.iter().enumerate() {
            prices[i][t] = (l * 1e4).round() / 1e4;
        }
    }
    let ids = (1..=n_assets).map(|i| format!("A{i}")).collect();
    let prices = PricePanel::new(ids, days.clone(), prices).expect("positive prices");

    let (months, _) = aggregate_monthly(&days, &vec![0.0; days.len()], MonthlyAggregation::Last);
    let m = months.len();
    let mut emv: Vec<Vec<f64>> = Vec::new();
    for k in 0..CATEGORIES.len() {
        let mut v = 10.0 + 5.0 * k as f64;
        emv.push(
            (0..m)
                .map(|_| {
                    v = (v + 2.0 * z.sample(&mut rng)).clamp(1.0, 60.0);
                    (v * 100.0).round() / 100.0
                })
                .collect(),
        );
    }
    // VIX_{t+1} from EMV_t; the driving category changes at the midpoint
    let mut vix = vec![0.0; m];
    vix[0] = 15.0;
    for t in 0..m - 1 {
        let driven = if t < m / 2 {
            10.0 + 0.6 * emv[0][t] + 0.1 * emv[2][t]
        } else {
            8.0 + 0.5 * emv[1][t] - 0.2 * emv[3][t] + 0.1 * emv[0][t]
        };
        vix[t + 1] = ((driven + 0.5 * z.sample(&mut rng)).max(5.0) * 100.0).round() / 100.0;
    }
    Fixture {
        prices,
        vix: ExogenousSeries::new("VIX", months.clone(), vix).expect("valid series"),
        emv: CATEGORIES
            .iter()
            .zip(emv)
            .map(|(n, v)| ExogenousSeries::new(*n, months.clone(), v).expect("valid series"))
            .collect(),
    }
}

/// Writes `prices.csv`, `vix.csv` and `emv.csv` into `dir`.
pub fn write_fixture(dir: &Path, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let f = synthetic_fixture(seed);
    f.prices.write_csv(&dir.join("prices.csv"))?;
    write_exogenous(std::slice::from_ref(&f.vix), &dir.join("vix.csv"))?;
    write_exogenous(&f.emv, &dir.join("emv.csv"))
}
