//! Newton ascent with step-halving line search, shared by the two maximum
//! likelihood fitters. The Hessian is either supplied analytically or built
//! by central differences of the gradient.

use ndarray::{Array1, Array2};

use crate::error::{HetfxError, Result};
use crate::linalg::solve_small;

pub(crate) struct NewtonControl {
    pub max_iter: usize,
    /// Convergence threshold on the sup-norm of the mean (per-observation)
    /// gradient.
    pub grad_tol: f64,
    /// Convergence threshold on the last parameter step, relative to scale.
    pub step_tol: f64,
    /// Below this relative step size, take the Newton step without a line
    /// search: near the optimum the improvement falls under the float
    /// resolution of the log-likelihood, but the step is a contraction.
    pub polish: f64,
}

impl Default for NewtonControl {
    fn default() -> Self {
        Self { max_iter: 200, grad_tol: 1e-6, step_tol: 1e-10, polish: 1e-6 }
    }
}

pub(crate) fn maximize(
    start: Array1<f64>,
    n_obs: usize,
    loglik: &dyn Fn(&Array1<f64>) -> f64,
    grad: &dyn Fn(&Array1<f64>) -> Array1<f64>,
    hessian: Option<&dyn Fn(&Array1<f64>) -> Array2<f64>>,
    ctrl: &NewtonControl,
) -> Result<(Array1<f64>, usize)> {
    let p = start.len();
    let mut psi = start;
    let mut ll = loglik(&psi);
    let mut last_step = f64::INFINITY;

    for iter in 0..=ctrl.max_iter {
        let g = grad(&psi);
        let gm = g.iter().map(|v| v.abs()).fold(0.0, f64::max) / n_obs.max(1) as f64;
        let scale = 1.0 + psi.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if gm < ctrl.grad_tol && last_step < ctrl.step_tol * scale {
            return Ok((psi, iter));
        }
        if iter == ctrl.max_iter {
            return Err(HetfxError::Nonconvergence { iterations: iter, grad_norm: gm });
        }

        let h = match hessian {
            Some(f) => f(&psi),
            None => fd_hessian(&psi, grad),
        };
        // Maximization step: solve (-H) delta = g; fall back to a scaled
        // gradient step when the Hessian is unusable.
        let neg_h = h.mapv(|v| -v);
        let delta = match solve_small(&neg_h, &g.clone().insert_axis(ndarray::Axis(1))) {
            Some(sol) => {
                let d = sol.column(0).to_owned();
                if d.iter().all(|v| v.is_finite()) && g.dot(&d) > 0.0 {
                    d
                } else {
                    g.mapv(|v| v / n_obs.max(1) as f64)
                }
            }
            None => g.mapv(|v| v / n_obs.max(1) as f64),
        };

        let delta_norm = delta.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if delta_norm < ctrl.polish * scale {
            psi = &psi + &delta;
            ll = loglik(&psi);
            last_step = delta_norm;
            continue;
        }

        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let cand = &psi + &delta.mapv(|v| v * t);
            let cand_ll = loglik(&cand);
            if cand_ll.is_finite() && cand_ll > ll {
                last_step = delta_norm * t;
                psi = cand;
                ll = cand_ll;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            if gm < ctrl.grad_tol {
                // Stationary up to float precision.
                return Ok((psi, iter));
            }
            return Err(HetfxError::Nonconvergence { iterations: iter, grad_norm: gm });
        }
        let _ = p;
    }
    unreachable!()
}

fn fd_hessian(psi: &Array1<f64>, grad: &dyn Fn(&Array1<f64>) -> Array1<f64>) -> Array2<f64> {
    let p = psi.len();
    let mut h = Array2::zeros((p, p));
    for k in 0..p {
        let step = 3e-6 * psi[k].abs().max(1.0);
        let mut hi = psi.clone();
        hi[k] += step;
        let mut lo = psi.clone();
        lo[k] -= step;
        let diff = (grad(&hi) - grad(&lo)) / (2.0 * step);
        h.column_mut(k).assign(&diff);
    }
    // Symmetrize.
    let ht = h.t().to_owned();
    (h + ht) * 0.5
}
