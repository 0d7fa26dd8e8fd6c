use fcix_core::chaos_index::{build_rpcm_from, consistency_index};
use fcix_core::mlp::{cdf_eval, mlp_quantile, MlpParams};
use fcix_core::regime_dynamics::{estimate_transition_matrix, stationary_distribution, TransitionOptions};
use fcix_core::regime_mixture::{bin_probabilities, build_bins, MixtureComponent, MlpMixtureModel};
use fcix_core::segmentation::{
    detect_changepoints, median_heuristic, total_cost, Bandwidth, SegmentationConfig, SegmentationMode,
};
use fcix_core::volatility_forecast::{fit_elastic_net, objective, DesignMatrix};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = MlpParams> {
    (-10.0..5.0f64, 0.05..2.0f64, 0.3..8.0f64).prop_map(|(m, s, w)| MlpParams::new(m, s, w).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn comparison_matrices_are_consistent(r in prop::collection::vec(0.5..1.5f64, 2..=20)) {
        let m = build_rpcm_from(&r).unwrap();
        let n = r.len();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((m.entries[(i, j)] * m.entries[(j, i)] - 1.0).abs() < 1e-12);
            }
        }
        prop_assert!(consistency_index(&m.entries).unwrap().abs() < 1e-9);
    }

    #[test]
    fn cdf_and_survival_are_complementary(p in params(), z in -6.0..6.0f64) {
        let psi = (p.mu + z * p.sigma).exp();
        let e = cdf_eval(psi, &p);
        prop_assert!((0.0..=1.0).contains(&e.cdf));
        prop_assert!((e.cdf + e.sf - 1.0).abs() < 1e-12);
        let e2 = cdf_eval(psi * 1.01, &p);
        prop_assert!(e2.cdf >= e.cdf);
    }

    #[test]
    fn quantile_inverts_cdf(p in params(), q in 0.001..0.999f64) {
        let x = mlp_quantile(q, &p).unwrap();
        prop_assert!((cdf_eval(x, &p).cdf - q).abs() < 1e-9);
    }

    #[test]
    fn bin_probabilities_form_a_distribution(
        comps in prop::collection::vec((params(), 0.1..1.0f64), 1..=4),
        x in prop::collection::vec(1e-5..1.0f64, 8..200),
    ) {
        let total: f64 = comps.iter().map(|c| c.1).sum();
        let model = MlpMixtureModel::new(
            comps.iter().map(|(p, w)| MixtureComponent { params: *p, pi: w / total }).collect(),
        );
        prop_assume!(model.is_ok());
        let model = model.unwrap();
        prop_assume!(x.iter().any(|v| *v != x[0]));
        let b = build_bins(&x).unwrap();
        let p = bin_probabilities(&b, &model);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn transition_rows_and_stationary_balance(labels in prop::collection::vec(0usize..3, 30..300)) {
        let names = ["a", "b", "c"];
        let seq: Vec<&str> = labels.iter().map(|l| names[*l]).collect();
        let states: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let p = estimate_transition_matrix(&seq, Some(&states), TransitionOptions { laplace: true }).unwrap();
        for row in &p.probs {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let v = stationary_distribution(&p).unwrap().probs;
        for j in 0..3 {
            let flow: f64 = (0..3).map(|i| v[i] * p.probs[i][j]).sum();
            prop_assert!((flow - v[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn segmentation_is_optimal_and_respects_min_size(
        x in prop::collection::vec(-3.0..3.0f64, 20..60),
        k in 1usize..3,
        cuts in prop::collection::vec(0.0..1.0f64, 2),
    ) {
        let m = 4;
        prop_assume!(x.len() >= (k + 1) * m);
        let h = median_heuristic(&x);
        let cfg = SegmentationConfig { mode: SegmentationMode::FixedK(k), bandwidth: Bandwidth::Fixed(h), min_size: m };
        let seg = detect_changepoints(&x, &cfg).unwrap();
        let mut prev = 0;
        for b in seg.breakpoints.iter().chain(std::iter::once(&x.len())) {
            prop_assert!(b - prev >= m);
            prev = *b;
        }
        // any other feasible placement costs at least as much
        let n = x.len();
        let mut alt: Vec<usize> = cuts.iter().take(k).map(|c| m + (c * (n - (k + 1) * m) as f64) as usize).collect();
        alt.sort();
        for (i, a) in alt.iter_mut().enumerate() {
            *a += i * m;
        }
        let c = total_cost(&x, &alt, h).unwrap();
        prop_assert!(seg.total_cost <= c + 1e-9);
    }

    #[test]
    fn elastic_net_beats_nearby_points(
        cols in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 25), 3),
        y in prop::collection::vec(-2.0..2.0f64, 25),
        alpha in 0.0..1.0f64,
        lambda in 0.001..1.0f64,
        dir in prop::collection::vec(-1.0..1.0f64, 3),
    ) {
        let months = (0..25).map(|i| chrono::NaiveDate::from_ymd_opt(2000 + i / 12, (i % 12) as u32 + 1, 1).unwrap()).collect();
        let d = DesignMatrix::new(vec!["a".into(), "b".into(), "c".into()], &cols, y, months).unwrap();
        prop_assume!(d.kept.len() == 3);
        let m = fit_elastic_net(&d, alpha, lambda).unwrap();
        let f0 = objective(&d.x, &d.y, &m.coefficients, alpha, lambda);
        for eps in [1e-3, 1e-2] {
            let b: Vec<f64> = m.coefficients.iter().zip(&dir).map(|(c, u)| c + eps * u).collect();
            prop_assert!(f0 <= objective(&d.x, &d.y, &b, alpha, lambda) + 1e-10);
        }
    }
}
