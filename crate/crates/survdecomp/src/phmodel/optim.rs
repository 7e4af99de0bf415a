//! dense BFGS minimizer with a strong-Wolfe line search. dimensions here
//! are small (a few dozen baseline cells plus coefficients), so the
//! inverse-Hessian approximation is kept as a dense matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SurvError};

pub(crate) struct BfgsOptions {
    pub max_iterations: usize,
    /// max-norm threshold on the gradient
    pub grad_tol: f64,
    /// relative objective-change threshold between accepted iterates
    pub rel_obj_tol: f64,
}

pub(crate) struct OptimOutcome {
    pub theta: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Eval {
    alpha: f64,
    value: f64,
    grad: DVector<f64>,
}

/// minimizes `f`, which must return the objective and its gradient.
/// the objective may return non-finite values away from the start point;
/// the line search treats those as overshoots and backtracks.
pub(crate) fn bfgs<F>(mut f: F, x0: Vec<f64>, opts: &BfgsOptions) -> Result<OptimOutcome>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = DVector::from_vec(x0);
    let (f0, g0) = f(x.as_slice());
    if !f0.is_finite() {
        return Err(SurvError::Estimation(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut fx = f0;
    let mut g = DVector::from_vec(g0);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut first_update_pending = true;

    for iter in 0..opts.max_iterations {
        let grad_norm = inf_norm(g.as_slice());
        if grad_norm < opts.grad_tol {
            return Ok(OptimOutcome {
                theta: x.as_slice().to_vec(),
                value: fx,
                iterations: iter,
                grad_norm,
            });
        }

        let mut dir = -(&h * &g);
        let mut slope = dir.dot(&g);
        if !(slope < 0.0) {
            // curvature information went bad; restart from steepest descent
            h = DMatrix::identity(n, n);
            first_update_pending = true;
            dir = -g.clone();
            slope = dir.dot(&g);
        }

        let probe = |f: &mut F, alpha: f64, x: &DVector<f64>, dir: &DVector<f64>| -> Eval {
            let xt = x + dir * alpha;
            let (v, gr) = f(xt.as_slice());
            Eval {
                alpha,
                value: v,
                grad: DVector::from_vec(gr),
            }
        };

        // strong-Wolfe search: expand until the minimum is bracketed, then
        // bisect inside the bracket
        let mut lo = Eval {
            alpha: 0.0,
            value: fx,
            grad: g.clone(),
        };
        let mut accepted: Option<Eval> = None;
        let mut bracket_hi: Option<Eval> = None;
        let mut alpha = 1.0;
        let mut prev = Eval {
            alpha: 0.0,
            value: fx,
            grad: g.clone(),
        };
        for expand in 0..30 {
            let trial = probe(&mut f, alpha, &x, &dir);
            let armijo_fail = !trial.value.is_finite()
                || trial.value > fx + C1 * trial.alpha * slope
                || (expand > 0 && trial.value >= prev.value);
            if armijo_fail {
                lo = prev;
                bracket_hi = Some(trial);
                break;
            }
            let dslope = trial.grad.dot(&dir);
            if dslope.abs() <= -C2 * slope {
                accepted = Some(trial);
                break;
            }
            if dslope >= 0.0 {
                bracket_hi = Some(prev);
                lo = trial;
                break;
            }
            alpha *= 2.0;
            prev = trial;
        }

        if accepted.is_none() {
            if let Some(mut hi) = bracket_hi {
                for _ in 0..50 {
                    let mid = 0.5 * (lo.alpha + hi.alpha);
                    let trial = probe(&mut f, mid, &x, &dir);
                    let armijo_fail = !trial.value.is_finite()
                        || trial.value > fx + C1 * trial.alpha * slope
                        || trial.value >= lo.value;
                    if armijo_fail {
                        hi = trial;
                        continue;
                    }
                    let dslope = trial.grad.dot(&dir);
                    if dslope.abs() <= -C2 * slope {
                        accepted = Some(trial);
                        break;
                    }
                    if dslope * (hi.alpha - lo.alpha) >= 0.0 {
                        hi = lo;
                    }
                    lo = trial;
                    if (hi.alpha - lo.alpha).abs() < 1e-16 {
                        break;
                    }
                }
            }
        }

        // settle for the best Armijo point if strong Wolfe never triggered
        let step = match accepted {
            Some(e) => e,
            None if lo.alpha > 0.0 && lo.value < fx => lo,
            None => {
                return Err(SurvError::NonConvergence {
                    iterations: iter,
                    grad_norm,
                    objective: -fx,
                });
            }
        };

        let x_new = &x + &dir * step.alpha;
        let s = &x_new - &x;
        let y = &step.grad - &g;
        let f_prev = fx;

        x = x_new;
        fx = step.value;
        g = step.grad;

        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first_update_pending {
                let scale = sy / y.dot(&y);
                if scale.is_finite() && scale > 0.0 {
                    h = DMatrix::identity(n, n) * scale;
                }
                first_update_pending = false;
            }
            // inverse BFGS update: H <- (I - r s y')(H)(I - r y s') + r s s'
            let r = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            let ss = &s * s.transpose();
            let hys = &hy * s.transpose();
            h = &h - (&hys + hys.transpose()) * r + ss * (r * (1.0 + r * yhy));
        }

        let rel_change = (f_prev - fx).abs() / fx.abs().max(1.0);
        if rel_change < opts.rel_obj_tol {
            let grad_norm = inf_norm(g.as_slice());
            return Ok(OptimOutcome {
                theta: x.as_slice().to_vec(),
                value: fx,
                iterations: iter + 1,
                grad_norm,
            });
        }
    }

    Err(SurvError::NonConvergence {
        iterations: opts.max_iterations,
        grad_norm: inf_norm(g.as_slice()),
        objective: -fx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn options() -> BfgsOptions {
        BfgsOptions {
            max_iterations: 500,
            grad_tol: 1e-9,
            rel_obj_tol: 1e-14,
        }
    }

    #[test]
    fn quadratic_bowl_converges_to_center() {
        let f = |x: &[f64]| {
            let v = 2.0 * (x[0] - 3.0).powi(2) + 0.5 * (x[1] + 1.0).powi(2);
            let g = vec![4.0 * (x[0] - 3.0), x[1] + 1.0];
            (v, g)
        };
        let out = bfgs(f, vec![10.0, 10.0], &options()).unwrap();
        assert!((out.theta[0] - 3.0).abs() < 1e-7);
        assert!((out.theta[1] + 1.0).abs() < 1e-7);
    }

    #[test]
    fn rosenbrock_converges() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            (v, g)
        };
        let out = bfgs(f, vec![-1.2, 1.0], &options()).unwrap();
        assert!((out.theta[0] - 1.0).abs() < 1e-6, "{:?}", out.theta);
        assert!((out.theta[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_regions_are_avoided() {
        // log barrier: objective only defined for x > 0
        let f = |x: &[f64]| {
            let v = x[0] - x[0].ln();
            let g = vec![1.0 - 1.0 / x[0]];
            (v, g)
        };
        let out = bfgs(f, vec![4.0], &options()).unwrap();
        assert!((out.theta[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn iteration_budget_is_enforced() {
        let f = |x: &[f64]| (x[0].powi(2), vec![2.0 * x[0]]);
        let res = bfgs(
            f,
            vec![100.0],
            &BfgsOptions {
                max_iterations: 0,
                grad_tol: 1e-9,
                rel_obj_tol: 1e-14,
            },
        );
        assert!(matches!(res, Err(SurvError::NonConvergence { .. })));
    }
}
