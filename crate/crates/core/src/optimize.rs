//! Trust-region quasi-Newton minimizer (dogleg steps on a BFGS model).
//!
//! The objective returns its value and gradient together. A non-finite value
//! marks an infeasible point: the step is rejected and the region shrinks, so
//! simple domain limits can be expressed inside the objective.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct TrustRegionOptions {
    /// Stop when the max-norm of the gradient falls below this.
    pub gtol: f64,
    pub max_iters: usize,
    pub initial_radius: f64,
    pub max_radius: f64,
}

impl Default for TrustRegionOptions {
    fn default() -> Self {
        Self {
            gtol: 1e-8,
            max_iters: 2000,
            initial_radius: 0.5,
            max_radius: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    /// Radius collapsed below machine resolution before the gradient test
    /// passed; the iterate cannot be improved in double precision.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective value at every accepted iterate, starting with `x0`.
    pub history: Vec<f64>,
}

/// Minimizes `fg` from `x0`. Returns `None` when the starting point is
/// infeasible.
pub fn minimize<F>(fg: F, x0: &[f64], opts: &TrustRegionOptions) -> Option<Minimum>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut f, g0) = fg(x.as_slice());
    if !f.is_finite() || g0.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut g = DVector::from_vec(g0);
    let mut b = DMatrix::<f64>::identity(n, n);
    let mut radius = opts.initial_radius;
    let mut history = vec![f];
    let mut first_step = true;

    for iter in 0..opts.max_iters {
        let gnorm = g.amax();
        if gnorm < opts.gtol {
            return Some(finish(x, f, gnorm, iter, Termination::Gradient, history));
        }
        if radius < 1e-13 * (1.0 + x.norm()) {
            return Some(finish(x, f, gnorm, iter, Termination::Stalled, history));
        }

        let p = dogleg(&b, &g, radius);
        let predicted = -(g.dot(&p) + 0.5 * p.dot(&(&b * &p)));
        let x_new = &x + &p;
        let (f_new, g_new) = fg(x_new.as_slice());
        let feasible = f_new.is_finite() && g_new.iter().all(|v| v.is_finite());

        let rho = if feasible && predicted > 0.0 {
            (f - f_new) / predicted
        } else {
            -1.0
        };
        let pnorm = p.norm();
        if rho < 0.25 {
            radius = 0.25 * pnorm;
        } else if rho > 0.75 && pnorm > 0.99 * radius {
            radius = (2.0 * radius).min(opts.max_radius);
        }

        if feasible {
            let g_new = DVector::from_vec(g_new);
            let y = &g_new - &g;
            let sy = p.dot(&y);
            if sy > 1e-12 * pnorm * y.norm() {
                if first_step {
                    // Rescale the identity before the first update.
                    b *= y.dot(&y) / sy;
                    first_step = false;
                }
                let bs = &b * &p;
                let sbs = p.dot(&bs);
                b += &y * y.transpose() / sy - &bs * bs.transpose() / sbs;
            }
            if rho > 1e-4 && f_new <= f {
                x = x_new;
                f = f_new;
                g = g_new;
                history.push(f);
            }
        }
    }
    let gnorm = g.amax();
    Some(finish(x, f, gnorm, opts.max_iters, Termination::MaxIterations, history))
}

fn finish(
    x: DVector<f64>,
    f: f64,
    grad_norm: f64,
    iterations: usize,
    termination: Termination,
    history: Vec<f64>,
) -> Minimum {
    Minimum {
        x: x.as_slice().to_vec(),
        f,
        grad_norm,
        iterations,
        termination,
        history,
    }
}

/// Dogleg step for the model `g'p + p'Bp/2` inside `|p| <= radius`.
fn dogleg(b: &DMatrix<f64>, g: &DVector<f64>, radius: f64) -> DVector<f64> {
    let newton = b.clone().cholesky().map(|c| -c.solve(g));
    if let Some(pb) = &newton {
        if pb.norm() <= radius {
            return pb.clone();
        }
    }
    let gbg = g.dot(&(b * g));
    let gg = g.dot(g);
    let gnorm = gg.sqrt();
    if gbg <= 0.0 {
        return -g * (radius / gnorm);
    }
    let pu = -g * (gg / gbg);
    let pu_norm = pu.norm();
    let pb = match newton {
        Some(pb) if pu_norm < radius => pb,
        _ => return pu * (radius / pu_norm.max(radius)),
    };
    // Solve |pu + tau (pb - pu)| = radius for tau in [0, 1].
    let d = &pb - &pu;
    let a = d.dot(&d);
    let bq = 2.0 * pu.dot(&d);
    let c = pu.dot(&pu) - radius * radius;
    let tau = (-bq + (bq * bq - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
    pu + d * tau.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        (f, g)
    }

    #[test]
    fn rosenbrock_minimum() {
        let m = minimize(rosenbrock, &[-1.2, 1.0], &TrustRegionOptions::default()).unwrap();
        assert_eq!(m.termination, Termination::Gradient);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn accepted_values_never_increase() {
        let m = minimize(rosenbrock, &[-1.2, 1.0], &TrustRegionOptions::default()).unwrap();
        assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn infeasible_region_is_avoided() {
        // minimum of (x - 3)^2 restricted to x < 2
        let f = |x: &[f64]| {
            if x[0] >= 2.0 {
                (f64::INFINITY, vec![0.0])
            } else {
                ((x[0] - 3.0).powi(2) - (2.0 - x[0]).ln(), vec![2.0 * (x[0] - 3.0) + 1.0 / (2.0 - x[0])])
            }
        };
        let m = minimize(f, &[0.0], &TrustRegionOptions::default()).unwrap();
        assert!(m.x[0] < 2.0);
        assert!(m.grad_norm < 1e-8);
    }

    #[test]
    fn infeasible_start() {
        let f = |_: &[f64]| (f64::NAN, vec![0.0]);
        assert!(minimize(f, &[0.0], &TrustRegionOptions::default()).is_none());
    }

    #[test]
    fn quadratic_in_few_steps() {
        let f = |x: &[f64]| {
            let f = 0.5 * (x[0] * x[0] + 10.0 * x[1] * x[1] + 100.0 * x[2] * x[2]);
            (f, vec![x[0], 10.0 * x[1], 100.0 * x[2]])
        };
        let m = minimize(f, &[1.0, 1.0, 1.0], &TrustRegionOptions::default()).unwrap();
        assert_eq!(m.termination, Termination::Gradient);
        assert!(m.iterations < 100, "{}", m.iterations);
    }
}
