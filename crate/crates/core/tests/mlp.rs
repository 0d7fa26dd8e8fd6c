mod common;

use fcix_core::mlp::{cdf_eval, mlp_cdf, mlp_moments, mlp_pdf, mlp_quantile, mlp_sample, MlpParams, MlpSampler};

const CASES: [(f64, f64, f64); 5] = [(0.0, 1.0, 2.0), (-8.5, 0.22, 3.58), (-7.2, 0.57, 3.87), (1.0, 0.1, 6.0), (0.5, 1.0, 1.5)];

#[test]
fn density_matches_convolution() {
    for (mu, s, w) in CASES {
        let p = MlpParams::new(mu, s, w).unwrap();
        for q in [0.01, 0.2, 0.5, 0.9, 0.999] {
            let psi = mlp_quantile(q, &p).unwrap();
            let a = mlp_pdf(psi, &p).unwrap();
            let b = common::mlp_pdf_convolution(psi, mu, s, w);
            assert!((a - b).abs() <= 1e-9 * b, "({mu},{s},{w}) q={q}: {a} vs {b}");
        }
    }
}

#[test]
fn cdf_matches_integrated_density() {
    for (mu, s, w) in CASES {
        let p = MlpParams::new(mu, s, w).unwrap();
        for q in [0.05, 0.5, 0.95] {
            let psi = mlp_quantile(q, &p).unwrap();
            let a = mlp_cdf(psi, &p).unwrap();
            let b = common::mlp_cdf_convolution(psi, mu, s, w);
            assert!((a - b).abs() < 1e-9, "({mu},{s},{w}) q={q}: {a} vs {b}");
        }
    }
}

#[test]
fn density_integrates_to_one() {
    for (mu, s, w) in CASES {
        let p = MlpParams::new(mu, s, w).unwrap();
        let lo = mu - 12.0 * s;
        let hi = mu + 12.0 * s + 60.0 / w;
        let total = common::gauss_legendre(|u| mlp_pdf(u.exp(), &p).unwrap() * u.exp(), lo, hi, 2000);
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }
}

#[test]
fn cdf_gradient_matches_finite_differences() {
    for (mu, s, w) in CASES {
        let p = MlpParams::new(mu, s, w).unwrap();
        let psi = mlp_quantile(0.4, &p).unwrap();
        let g = cdf_eval(psi, &p).grad;
        let h = 1e-6;
        let fd = |d: [f64; 3]| {
            let up = MlpParams::new(mu + d[0] * h, s + d[1] * h, w + d[2] * h).unwrap();
            let dn = MlpParams::new(mu - d[0] * h, s - d[1] * h, w - d[2] * h).unwrap();
            (cdf_eval(psi, &up).cdf - cdf_eval(psi, &dn).cdf) / (2.0 * h)
        };
        for (k, d) in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]].into_iter().enumerate() {
            assert!((g[k] - fd(d)).abs() < 1e-6, "param {k}: {} vs {}", g[k], fd(d));
        }
    }
}

#[test]
fn moments_match_quadrature() {
    for (mu, s, w) in [(-8.5, 0.22, 3.58), (0.0, 0.5, 5.0)] {
        let p = MlpParams::new(mu, s, w).unwrap();
        let m = mlp_moments(&p);
        let lo = mu - 12.0 * s;
        let hi = mu + 12.0 * s + 200.0 / (w - 2.0);
        let mean = common::gauss_legendre(|u| mlp_pdf(u.exp(), &p).unwrap() * (2.0 * u).exp(), lo, hi, 8000);
        let second = common::gauss_legendre(|u| mlp_pdf(u.exp(), &p).unwrap() * (3.0 * u).exp(), lo, hi, 8000);
        let mv = m.mean.value().unwrap();
        assert!((mv - mean).abs() < 1e-8 * mean, "{mv} vs {mean}");
        let var = second - mean * mean;
        let vv = m.variance.value().unwrap();
        assert!((vv - var).abs() < 1e-6 * var, "{vv} vs {var}");
    }
}

#[test]
fn sampler_agrees_with_cdf() {
    let p = MlpParams::new(-7.7, 0.3, 3.8).unwrap();
    let x = mlp_sample(&MlpSampler::new(p, 1).unwrap(), 20_000, 3).unwrap();
    let (_, pv) = common::ks_test(&x, |v| mlp_cdf(v, &p).unwrap());
    assert!(pv > 0.01, "{pv}");
}

#[test]
fn sampler_rates_only_enter_through_their_ratio() {
    let a = MlpSampler::with_rates(0.0, 0.5, 2.0, 6.0, 1).unwrap();
    assert!((a.params().omega - 3.0).abs() < 1e-15);
    let x = mlp_sample(&a, 20_000, 5).unwrap();
    let (_, pv) = common::ks_test(&x, |v| mlp_cdf(v, a.params()).unwrap());
    assert!(pv > 0.01, "{pv}");
}
