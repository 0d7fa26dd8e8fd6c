//! Special functions: log-domain complementary error function, standard
//! normal helpers and the chi-squared survival function.

use statrs::distribution::{ChiSquared, ContinuousCDF};

const LN_SQRT_PI: f64 = 0.572_364_942_924_700_1;
const LN_2: f64 = std::f64::consts::LN_2;
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Above this argument `erfc` is evaluated through its continued fraction,
/// which keeps full relative precision where the direct value underflows.
const CF_THRESHOLD: f64 = 10.0;

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Laplace continued fraction `x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))`,
/// evaluated with the modified Lentz scheme; `erfc(x) = exp(-x^2) / (sqrt(pi) * cf)`.
fn erfc_cf(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = x;
    let mut c = f;
    let mut d = 0.0;
    for n in 1..500 {
        let a = n as f64 * 0.5;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        d = 1.0 / d;
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

/// `ln(erfc(x))`, accurate for arbitrarily large positive `x`.
pub fn ln_erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < CF_THRESHOLD {
        libm::erfc(x).ln()
    } else if x.is_infinite() {
        f64::NEG_INFINITY
    } else {
        -x * x - LN_SQRT_PI - erfc_cf(x).ln()
    }
}

/// `exp(x^2) * erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < CF_THRESHOLD {
        (x * x).exp() * libm::erfc(x)
    } else {
        1.0 / (std::f64::consts::PI.sqrt() * erfc_cf(x))
    }
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn ln_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal cdf `Phi(x)`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Phi(x)`, accurate deep into the lower tail.
pub fn ln_norm_cdf(x: f64) -> f64 {
    ln_erfc(-x * FRAC_1_SQRT_2) - LN_2
}

/// Upper-tail probability of a chi-squared variable with `dof` degrees of freedom.
pub fn chi2_sf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    match ChiSquared::new(dof as f64) {
        Ok(d) => d.sf(x),
        Err(_) => f64::NAN,
    }
}
