//! Internal maximizers: BFGS with backtracking line search for the margin
//! likelihoods and golden-section refinement for the scalar ρ profile.
//!
//! Objectives may return −∞ (or NaN) at infeasible points; the line search
//! treats those as rejected steps and shrinks.

use nalgebra::{DMatrix, DVector};

/// Result of a quasi-Newton maximization.
#[derive(Debug, Clone)]
pub(crate) struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective values at accepted iterates, starting from x0.
    pub trace: Vec<f64>,
}

const ARMIJO_C1: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-7;
const MAX_BACKTRACKS: usize = 60;

/// Maximize `f` from `x0`. `f` returns the objective and its gradient;
/// non-finite objective values mark infeasible points.
pub(crate) fn bfgs_maximize<F>(f: F, x0: &[f64], tol: f64, max_iters: usize) -> BfgsOutcome
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let dim = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut value, mut grad) = eval(&f, &x);
    let mut trace = vec![value];

    if dim == 0 || !value.is_finite() {
        return BfgsOutcome {
            x: x.as_slice().to_vec(),
            value,
            gradient: grad.as_slice().to_vec(),
            iterations: 0,
            converged: dim == 0 && value.is_finite(),
            trace,
        };
    }

    let mut h = DMatrix::<f64>::identity(dim, dim);
    let mut converged = false;
    let mut iterations = 0;
    let mut first_update = true;

    while iterations < max_iters {
        iterations += 1;
        if grad.amax() < GRAD_TOL * (1.0 + value.abs()) {
            converged = true;
            break;
        }
        let mut direction = &h * &grad;
        let mut slope = direction.dot(&grad);
        if slope.is_nan() || slope <= 0.0 || !direction.iter().all(|v| v.is_finite()) {
            // Curvature information went bad; restart from steepest ascent.
            h = DMatrix::identity(dim, dim);
            direction = grad.clone();
            slope = direction.dot(&grad);
            if slope.is_nan() || slope <= 0.0 {
                break;
            }
        }

        // Backtracking Armijo search along the ascent direction.
        let mut step = 1.0f64;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = &x + &direction * step;
            let (v, g) = eval(&f, &candidate);
            if v.is_finite() && v >= value + ARMIJO_C1 * step * slope {
                accepted = Some((candidate, v, g));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, v_new, g_new)) = accepted else {
            // No admissible step; the current point is as good as it gets.
            converged = grad.amax() < 1e-5 * (1.0 + value.abs());
            break;
        };

        let s = &x_new - &x;
        let y = &g_new - &grad;
        let sy = -s.dot(&y); // curvature of the negated (minimized) objective
        if sy > 1e-12 * s.norm() * y.norm() {
            if first_update {
                h *= sy / y.dot(&y);
                first_update = false;
            }
            // Inverse-Hessian BFGS update, signs folded for maximization:
            // H += (Hy sᵀ + s (Hy)ᵀ)/sy + (sy + yᵀHy)·s sᵀ/sy².
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            let ss = &s * s.transpose();
            let hys = &hy * s.transpose();
            h += ss * ((sy + yhy) / (sy * sy));
            h += (&hys + hys.transpose()) * (1.0 / sy);
        }

        let delta = v_new - value;
        x = x_new;
        value = v_new;
        grad = g_new;
        trace.push(value);
        if delta.abs() < tol * (1.0 + value.abs()) {
            converged = true;
            break;
        }
    }

    BfgsOutcome {
        x: x.as_slice().to_vec(),
        value,
        gradient: grad.as_slice().to_vec(),
        iterations,
        converged,
        trace,
    }
}

fn eval<F>(f: &F, x: &DVector<f64>) -> (f64, DVector<f64>)
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (v, g) = f(x.as_slice());
    (v, DVector::from_vec(g))
}

/// Golden-section maximization of a unimodal scalar function on [a, b].
/// Returns the maximizing argument and its value.
pub(crate) fn golden_section_max<F>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    (mid, f(mid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn maximizes_concave_quadratic() {
        // f(x) = -(x0-1)^2 - 2(x1+0.5)^2
        let f = |x: &[f64]| {
            let v = -(x[0] - 1.0).powi(2) - 2.0 * (x[1] + 0.5).powi(2);
            let g = vec![-2.0 * (x[0] - 1.0), -4.0 * (x[1] + 0.5)];
            (v, g)
        };
        let out = bfgs_maximize(f, &[5.0, 5.0], 1e-12, 200);
        assert!(out.converged);
        assert_abs_diff_eq!(out.x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(out.x[1], -0.5, epsilon = 1e-6);
    }

    #[test]
    fn handles_infeasible_regions() {
        // Objective is -inf outside x < 2.
        let f = |x: &[f64]| {
            if x[0] >= 2.0 {
                (f64::NEG_INFINITY, vec![0.0])
            } else {
                (-(x[0] - 1.5).powi(2), vec![-2.0 * (x[0] - 1.5)])
            }
        };
        let out = bfgs_maximize(f, &[0.0], 1e-12, 200);
        assert_abs_diff_eq!(out.x[0], 1.5, epsilon = 1e-6);
    }

    #[test]
    fn accepted_iterates_are_monotone() {
        let f = |x: &[f64]| {
            let v = -(x[0]).powi(4) - (x[1] - 2.0).powi(2) + x[0];
            let g = vec![-4.0 * x[0].powi(3) + 1.0, -2.0 * (x[1] - 2.0)];
            (v, g)
        };
        let out = bfgs_maximize(f, &[3.0, -3.0], 1e-10, 300);
        assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn golden_section_finds_scalar_maximum() {
        let (x, v) = golden_section_max(|x| -(x - 0.3).powi(2) + 1.0, -1.0, 1.0, 1e-9);
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-7);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
    }
}
