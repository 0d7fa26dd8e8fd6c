mod common;

use chrono::NaiveDate;
use fcix_core::volatility_forecast::{
    cross_validate, fit_elastic_net, fit_elastic_net_with, lambda_path, predict, CvConfig, DesignMatrix,
    SolverOptions,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn months(n: usize) -> Vec<NaiveDate> {
    (0..n)
        .map(|i| NaiveDate::from_ymd_opt(2000 + (i / 12) as i32, (i % 12) as u32 + 1, 1).unwrap())
        .collect()
}

/// `n x p` Gaussian predictors and a target that depends on `beta`.
fn planted(n: usize, beta: &[f64], noise: f64, seed: u64) -> DesignMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let cols: Vec<Vec<f64>> = beta.iter().map(|_| (0..n).map(|_| z.sample(&mut rng)).collect()).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 3.0 + beta.iter().enumerate().map(|(j, b)| b * cols[j][i]).sum::<f64>() + noise * z.sample(&mut rng))
        .collect();
    let names = (0..beta.len()).map(|j| format!("x{j}")).collect();
    DesignMatrix::new(names, &cols, y, months(n)).unwrap()
}

fn tight() -> SolverOptions {
    SolverOptions {
        tol: 1e-14,
        ..SolverOptions::default()
    }
}

#[test]
fn unpenalized_fit_is_least_squares() {
    let d = planted(80, &[1.0, -2.0, 0.5, 0.0, 0.3], 0.5, 1);
    let m = fit_elastic_net_with(&d, 0.5, 0.0, &tight(), None).unwrap();
    let oracle = common::ols(&d.x, &d.y);
    for (a, b) in m.coefficients.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn pure_ridge_is_closed_form() {
    let d = planted(60, &[1.0, -2.0, 0.5, 0.0], 1.0, 2);
    for lambda in [0.01, 0.3, 2.0] {
        let m = fit_elastic_net_with(&d, 0.0, lambda, &tight(), None).unwrap();
        let oracle = common::ridge(&d.x, &d.y, lambda);
        for (a, b) in m.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "lambda={lambda}: {a} vs {b}");
        }
    }
}

#[test]
fn every_solution_satisfies_kkt() {
    let d = planted(70, &[1.0, 0.0, -0.7, 0.0, 0.2, 0.0], 1.0, 3);
    for alpha in [0.0, 0.1, 0.5, 0.9, 1.0] {
        for lambda in lambda_path(d.lambda_max(alpha), 12, 1e-3) {
            let m = fit_elastic_net(&d, alpha, lambda).unwrap();
            let v = common::kkt_violation(&d.x, &d.y, &m.coefficients, alpha, lambda);
            assert!(v < 1e-6, "alpha={alpha} lambda={lambda}: {v}");
        }
    }
}

#[test]
fn lambda_max_zeroes_everything() {
    let d = planted(50, &[1.0, -1.0, 0.5], 1.0, 4);
    for alpha in [0.2, 1.0] {
        let m = fit_elastic_net(&d, alpha, d.lambda_max(alpha) * 1.0001).unwrap();
        assert!(m.coefficients.iter().all(|b| *b == 0.0));
        let m = fit_elastic_net(&d, alpha, d.lambda_max(alpha) * 0.95).unwrap();
        assert!(m.coefficients.iter().any(|b| *b != 0.0));
    }
}

#[test]
fn raw_scale_prediction_inverts_standardization() {
    let d = planted(40, &[2.0, -1.0], 0.1, 5);
    let m = fit_elastic_net(&d, 0.5, 0.001).unwrap();
    let row: Vec<f64> = (0..2).map(|j| d.raw_x[(7, j)]).collect();
    let yhat = predict(&m, &row).unwrap();
    let std_hat: f64 = (0..2).map(|k| m.coefficients[k] * d.x[(7, k)]).sum();
    assert!((yhat - (d.y_mean + d.y_sd * std_hat)).abs() < 1e-9);
}

#[test]
fn noise_target_prefers_sparse_models() {
    let mut sizes = Vec::new();
    for seed in 0..15 {
        let d = planted(60, &[0.0; 5], 1.0, 100 + seed);
        let cv = cross_validate(&d, &CvConfig::default()).unwrap();
        let m = fit_elastic_net(&d, cv.best_alpha, cv.best_lambda).unwrap();
        // ridge never zeroes a coefficient, so count only non-negligible ones
        sizes.push(m.coefficients.iter().filter(|b| b.abs() > 1e-2).count());
    }
    sizes.sort();
    assert!(sizes[sizes.len() / 2] <= 1, "{sizes:?}");
}

#[test]
fn leave_one_out_matches_naive_refits() {
    let d = planted(10, &[1.0, -0.5], 0.5, 9);
    let cfg = CvConfig {
        alpha_grid: vec![0.5],
        lambda_grid: Some(vec![0.05, 0.5]),
        folds: 10,
        ..CvConfig::default()
    };
    let cv = cross_validate(&d, &cfg).unwrap();
    for cell in &cv.table {
        // held-out errors in the full-sample standardized scale
        let mut errs = Vec::new();
        for i in 0..10 {
            let train: Vec<usize> = (0..10).filter(|k| *k != i).collect();
            let sub = d.subset(&train).unwrap();
            let m = fit_elastic_net(&sub, cell.alpha, cell.lambda).unwrap();
            let row: Vec<f64> = (0..2).map(|j| d.raw_x[(i, j)]).collect();
            let yhat = predict(&m, &row).unwrap();
            errs.push(((yhat - d.raw_y[i]) / d.y_sd).powi(2));
        }
        let naive = errs.iter().sum::<f64>() / 10.0;
        assert!((cell.mean_mse - naive).abs() < 1e-6 * naive.max(1.0), "{} vs {naive}", cell.mean_mse);
    }
}

#[test]
fn cross_validation_recovers_planted_support() {
    let beta = [1.5, 0.0, -1.0, 0.0, 0.0, 0.8, 0.0, 0.0];
    let d = planted(150, &beta, 0.3, 6);
    let cv = cross_validate(&d, &CvConfig::default()).unwrap();
    let m = fit_elastic_net(&d, cv.best_alpha, cv.best_lambda).unwrap();
    // minimum-MSE tuning may admit tiny extra coefficients, so the planted
    // predictors must be selected with the right sign and dominate the rest
    let c = &m.coefficients;
    let planted: Vec<usize> = (0..beta.len()).filter(|j| beta[*j] != 0.0).collect();
    assert!(planted.iter().all(|j| c[*j].signum() == beta[*j].signum()), "{c:?}");
    let weakest = planted.iter().map(|j| c[*j].abs()).fold(f64::INFINITY, f64::min);
    let strongest_other = (0..beta.len())
        .filter(|j| beta[*j] == 0.0)
        .map(|j| c[j].abs())
        .fold(0.0, f64::max);
    assert!(weakest > 10.0 * strongest_other, "{c:?}");
    assert!(cv.oof_r2 > 0.9, "{}", cv.oof_r2);
}

#[test]
fn segments_recover_their_own_supports() {
    use fcix_core::market_data::ExogenousSeries;
    use fcix_core::volatility_forecast::{fit_segments, MonthRange};

    let n = 120;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let z = Normal::new(0.0, 1.0).unwrap();
    let m = months(n);
    let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| 20.0 + 5.0 * z.sample(&mut rng)).collect()).collect();
    // target month t + 1 driven by predictors at month t
    let mut y = vec![15.0; n];
    for t in 0..n - 1 {
        let b = if t < 60 { [1.0, 0.0, 0.0, 0.0] } else { [0.0, 0.0, -1.0, 0.0] };
        y[t + 1] = 15.0 + (0..4).map(|k| b[k] * cols[k][t]).sum::<f64>() + 0.2 * z.sample(&mut rng);
    }
    let preds: Vec<ExogenousSeries> =
        (0..4).map(|k| ExogenousSeries::new(format!("x{k}"), m.clone(), cols[k].clone()).unwrap()).collect();
    let target = ExogenousSeries::new("y", m.clone(), y).unwrap();
    let ranges = [
        MonthRange { start: m[0], end: m[59] },
        MonthRange { start: m[60], end: m[118] },
    ];
    let out = fit_segments(&ranges, &preds, &target, &CvConfig::default()).unwrap();
    for (seg, j) in out.iter().zip([0, 2]) {
        let c = &seg.model.as_ref().unwrap().coefficients;
        let top = (0..4).max_by(|a, b| c[*a].abs().total_cmp(&c[*b].abs())).unwrap();
        assert_eq!(top, j, "{c:?}");
        assert!(seg.cv.unwrap().oof_r2 > 0.9);
    }
}
