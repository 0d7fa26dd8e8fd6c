//! Reference implementations used only by tests. Each one is written from
//! first principles and shares no code with the library.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Composite 10-point Gauss-Legendre rule on `[a, b]` with `panels` panels.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [
        0.148_874_338_981_631_2,
        0.433_395_394_129_247_2,
        0.679_409_568_299_024_4,
        0.865_063_366_688_984_5,
        0.973_906_528_517_171_7,
    ];
    const W: [f64; 5] = [
        0.295_524_224_714_752_9,
        0.269_266_719_309_996_4,
        0.219_086_362_515_982_0,
        0.149_451_349_150_580_6,
        0.066_671_344_308_688_1,
    ];
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        for k in 0..5 {
            acc += W[k] * half * (f(mid - half * X[k]) + f(mid + half * X[k]));
        }
    }
    acc
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// MLP density by direct convolution: `ln psi` is `Normal(mu, sigma^2)`
/// plus an independent `Exponential(omega)`.
pub fn mlp_pdf_convolution(psi: f64, mu: f64, sigma: f64, omega: f64) -> f64 {
    let y = psi.ln();
    let upper = (40.0 / omega).max(y - mu + 12.0 * sigma).max(1.0);
    let f = |t: f64| omega * (-omega * t).exp() * std_normal_pdf((y - t - mu) / sigma) / sigma;
    gauss_legendre(f, 0.0, upper, 600) / psi
}

/// `P(ln psi <= y)` by integrating the convolution density over `ln psi`.
pub fn mlp_cdf_convolution(psi: f64, mu: f64, sigma: f64, omega: f64) -> f64 {
    let y = psi.ln();
    let lo = mu - 14.0 * sigma;
    if y <= lo {
        return 0.0;
    }
    let g = |u: f64| mlp_pdf_convolution(u.exp(), mu, sigma, omega) * u.exp();
    gauss_legendre(g, lo, y, 120)
}

/// `Q(k/2, x/2)` for even `k`: `exp(-x/2) sum_{j < k/2} (x/2)^j / j!`.
pub fn chi2_sf_even(x: f64, k: usize) -> f64 {
    assert!(k % 2 == 0 && k > 0);
    let h = 0.5 * x;
    let mut term = 1.0;
    let mut acc = 1.0;
    for j in 1..k / 2 {
        term *= h / j as f64;
        acc += term;
    }
    (-h).exp() * acc
}

/// Lanczos approximation (g = 7, n = 9) of `ln Gamma(z)` for `z > 0`.
pub fn ln_gamma(z: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut a = C[0];
    let t = z + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
}

/// `Q(k/2, x/2)` through the power series of the lower incomplete gamma,
/// `P(a, x) = x^a e^-x / Gamma(a + 1) * sum_n x^n / ((a + 1) ... (a + n))`.
pub fn chi2_sf_series(x: f64, k: f64) -> f64 {
    let a = 0.5 * k;
    let h = 0.5 * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 1.0;
    while term > 1e-17 * sum {
        term *= h / (a + n);
        sum += term;
        n += 1.0;
    }
    1.0 - (a * h.ln() - h - ln_gamma(a + 1.0)).exp() * sum
}

/// Largest real part among the eigenvalues, from nalgebra's Schur form.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Least squares by SVD.
pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let svd = x.clone().svd(true, true);
    svd.solve(&DVector::from_column_slice(y), 1e-12).unwrap().iter().copied().collect()
}

/// Minimizer of `(1/n) ||y - X b||^2 + (lambda / 2) ||b||^2`.
pub fn ridge(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Vec<f64> {
    let n = x.nrows() as f64;
    let p = x.ncols();
    let a = x.transpose() * x + DMatrix::identity(p, p) * (n * lambda / 2.0);
    let b = x.transpose() * DVector::from_column_slice(y);
    a.cholesky().unwrap().solve(&b).iter().copied().collect()
}

/// Largest violation of the stationarity conditions of
/// `(1/n) RSS + lambda (alpha |b|_1 + (1 - alpha) / 2 |b|^2)`.
pub fn kkt_violation(x: &DMatrix<f64>, y: &[f64], b: &[f64], alpha: f64, lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let r = DVector::from_column_slice(y) - x * DVector::from_column_slice(b);
    let mut worst: f64 = 0.0;
    for j in 0..x.ncols() {
        let g = 2.0 / n * x.column(j).dot(&r);
        let v = if b[j] != 0.0 {
            (g - lambda * (alpha * b[j].signum() + (1.0 - alpha) * b[j])).abs()
        } else {
            (g.abs() - lambda * alpha).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

fn segment_cost(x: &[f64], h: f64) -> f64 {
    let len = x.len() as f64;
    let mut s = 0.0;
    for a in x {
        for b in x {
            s += (-(a - b).powi(2) / (2.0 * h * h)).exp();
        }
    }
    len - s / len
}

/// Minimum total kernel cost over every placement of exactly `k`
/// breakpoints with segments of at least `min_size`, by enumeration.
pub fn brute_force_segmentation(x: &[f64], k: usize, min_size: usize, h: f64) -> Option<(Vec<usize>, f64)> {
    fn rec(
        x: &[f64],
        start: usize,
        left: usize,
        m: usize,
        h: f64,
        cur: &mut Vec<usize>,
        acc: f64,
        best: &mut Option<(Vec<usize>, f64)>,
    ) {
        let n = x.len();
        if left == 0 {
            if n - start >= m {
                let total = acc + segment_cost(&x[start..], h);
                if best.as_ref().is_none_or(|b| total < b.1) {
                    *best = Some((cur.clone(), total));
                }
            }
            return;
        }
        for b in start + m..=n.saturating_sub(m * left) {
            cur.push(b);
            rec(x, b, left - 1, m, h, cur, acc + segment_cost(&x[start..b], h), best);
            cur.pop();
        }
    }
    let mut best = None;
    rec(x, 0, k, min_size.max(1), h, &mut Vec::new(), 0.0, &mut best);
    best
}

/// Two-sided one-sample Kolmogorov-Smirnov statistic and asymptotic
/// p-value (with the Stephens small-sample correction).
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let t = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        p += t;
        if t.abs() < 1e-16 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

/// Stationary vector as the normalized left eigenvector for eigenvalue 1,
/// found by null space of `(P^T - I)` via SVD.
pub fn stationary_svd(p: &[Vec<f64>]) -> Vec<f64> {
    let r = p.len();
    let a = DMatrix::from_fn(r, r, |i, j| p[j][i] - if i == j { 1.0 } else { 0.0 });
    let svd = a.svd(false, true);
    let vt = svd.v_t.unwrap();
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let v: Vec<f64> = vt.row(k).iter().copied().collect();
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

/// The three-regime parameters used throughout as a realistic mixture:
/// `(mu, sigma, omega, pi)`.
pub const THREE_REGIMES: [(f64, f64, f64, f64); 3] = [
    (-8.502, 0.218, 3.584, 0.355),
    (-7.697, 0.308, 3.837, 0.548),
    (-7.204, 0.573, 3.869, 0.097),
];

pub const TWO_REGIMES: [(f64, f64, f64, f64); 2] = [(-8.414, 0.306, 2.662, 0.522), (-7.646, 0.245, 2.627, 0.478)];

pub const ONE_REGIME: [(f64, f64, f64, f64); 1] = [(-7.988, 0.525, 3.159, 1.0)];

pub fn mixture(c: &[(f64, f64, f64, f64)]) -> fcix_core::regime_mixture::MlpMixtureModel {
    use fcix_core::mlp::MlpParams;
    use fcix_core::regime_mixture::{MixtureComponent, MlpMixtureModel};
    MlpMixtureModel::new(
        c.iter()
            .map(|(m, s, w, p)| MixtureComponent {
                params: MlpParams::new(*m, *s, *w).unwrap(),
                pi: *p,
            })
            .collect(),
    )
    .unwrap()
}

/// `n` draws with component counts fixed at `round(pi n)`.
pub fn mixture_sample(c: &[(f64, f64, f64, f64)], n: usize, seed: u64) -> Vec<f64> {
    use fcix_core::mlp::{sample_with, MlpParams};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut used = 0;
    for (i, (m, s, w, p)) in c.iter().enumerate() {
        let k = if i + 1 == c.len() { n - used } else { (p * n as f64).round() as usize };
        used += k;
        out.extend(sample_with(&MlpParams::new(*m, *s, *w).unwrap(), k, &mut rng));
    }
    out
}
