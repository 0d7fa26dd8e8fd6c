mod common;

use chrono::NaiveDate;
use fcix_core::chaos_index::{
    build_rpcm_from, compute_fcix, consistency_index, dominant_eigen, fcix_pipeline, fit_rank_one, AlsOptions,
    ComparisonTensor, DenseTensor,
};
use fcix_core::market_data::{compute_returns, PricePanel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn perron_root_matches_schur_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [2, 3, 7, 15] {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.1..3.0));
        let (lambda, v) = dominant_eigen(&m, 1e-13, 10_000).unwrap();
        let oracle = common::spectral_radius(&m);
        assert!((lambda - oracle).abs() < 1e-10 * oracle, "n={n}: {lambda} vs {oracle}");
        assert!(v.iter().all(|x| *x > 0.0));
    }
}

#[test]
fn perturbed_comparison_matrix_is_inconsistent() {
    let mut m = build_rpcm_from(&[1.01, 0.99, 1.02]).unwrap().entries;
    assert!(consistency_index(&m).unwrap().abs() < 1e-12);
    m[(0, 1)] *= 1.5;
    m[(1, 0)] /= 1.5;
    let ci = consistency_index(&m).unwrap();
    let oracle = (common::spectral_radius(&m) - 3.0) / 2.0;
    assert!(ci > 1e-3);
    assert!((ci - oracle).abs() < 1e-10);
}

#[test]
fn implicit_and_dense_tensors_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 6;
    let t_len = 40;
    let days: Vec<NaiveDate> = (0..t_len).map(|i| NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + chrono::Duration::days(i)).collect();
    let mut prices = vec![vec![0.0; t_len as usize]; n];
    for row in prices.iter_mut() {
        let mut p = 50.0;
        for v in row.iter_mut() {
            p *= 1.0 + rng.random_range(-0.03..0.03);
            *v = p;
        }
    }
    let panel = PricePanel::new((0..n).map(|i| format!("S{i}")).collect(), days, prices).unwrap();
    let returns = compute_returns(&panel).unwrap();
    let implicit = ComparisonTensor::from_returns(&returns).unwrap();
    let dense = DenseTensor::new(returns.iter().map(|r| build_rpcm_from(&r.values).unwrap().entries).collect()).unwrap();
    let a = fit_rank_one(&implicit, 1e-12, 500).unwrap();
    let b = fit_rank_one(&dense, 1e-12, 500).unwrap();
    assert!((a.residual - b.residual).abs() < 1e-9 * b.residual.max(1.0));
    for (x, y) in a.z.iter().zip(&b.z) {
        assert!((x - y).abs() < 1e-9 * y.abs().max(1.0));
    }

    // chaos index equals the Perron-root formula on each rank-one slice
    let s = compute_fcix(&a, n, implicit.timestamps()).unwrap();
    for t in [0, 17, 38] {
        let m = DMatrix::from_fn(n, n, |i, j| a.z[t] * a.x[i] * a.y[j]);
        let oracle = (common::spectral_radius(&m) - n as f64) / (n as f64 - 1.0);
        assert!((s.values[t] - oracle).abs() < 1e-9 * oracle.abs().max(1.0));
    }
}

#[test]
fn pipeline_on_bundled_prices() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let report = fcix_core::market_data::load_price_panel(&dir.join("prices.csv")).unwrap();
    let run = fcix_pipeline(&report.panel, AlsOptions::default()).unwrap();
    assert!(run.factors.converged);
    assert_eq!(run.series.len(), report.panel.n_times() - 1);
    assert!(run.series.values.iter().all(|v| *v > 0.0));
}

#[test]
fn exact_rank_one_converges_at_rounding_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..20).map(|_| rng.random_range(0.5..2.0)).collect();
    let y: Vec<f64> = (0..20).map(|_| rng.random_range(0.5..2.0)).collect();
    let z: Vec<f64> = (0..100).map(|_| rng.random_range(0.1..5.0)).collect();
    let slices = z.iter().map(|zt| DMatrix::from_fn(20, 20, |i, j| zt * x[i] * y[j])).collect();
    let f = fit_rank_one(&DenseTensor::new(slices).unwrap(), 1e-14, 1000).unwrap();
    assert!(f.residual < 1e-8, "{}", f.residual);
}
