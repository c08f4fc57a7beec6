//! Limited-memory BFGS maximizer with backtracking line search.
//! Internally minimizes the negated objective with the textbook
//! two-loop recursion.

use nalgebra::DVector;

use crate::error::Result;

pub struct Outcome {
    pub theta: DVector<f64>,
    /// Objective value at `theta` (kept for diagnostics and tests).
    #[allow(dead_code)]
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MEMORY: usize = 10;

/// Maximize `f` from `theta0`. Convergence is gradient max-norm at or
/// below `tol` scaled by the objective magnitude, so the criterion is
/// invariant to rescaling the objective.
pub fn maximize<F>(mut f: F, theta0: &DVector<f64>, max_iters: usize, tol: f64) -> Result<Outcome>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    // g = -f throughout
    let mut eval = |theta: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let (v, grad) = f(theta)?;
        Ok((-v, -grad))
    };

    let mut theta = theta0.clone();
    let (mut g_value, mut g_grad) = eval(&theta)?;
    let mut s_hist: Vec<DVector<f64>> = Vec::new();
    let mut y_hist: Vec<DVector<f64>> = Vec::new();

    for iter in 0..max_iters {
        let grad_norm = g_grad.amax();
        let threshold = tol * g_value.abs().max(1.0);
        if grad_norm <= threshold {
            return Ok(Outcome {
                theta,
                value: -g_value,
                grad_norm,
                iterations: iter,
                converged: true,
            });
        }

        // two-loop recursion: q = H·∇g
        let mut q = g_grad.clone();
        let m = s_hist.len();
        let mut alphas = vec![0.0; m];
        for i in (0..m).rev() {
            let rho = 1.0 / y_hist[i].dot(&s_hist[i]);
            alphas[i] = rho * s_hist[i].dot(&q);
            q -= &y_hist[i] * alphas[i];
        }
        if let Some(i) = m.checked_sub(1) {
            let gamma = s_hist[i].dot(&y_hist[i]) / y_hist[i].dot(&y_hist[i]);
            q *= gamma;
        }
        for i in 0..m {
            let rho = 1.0 / y_hist[i].dot(&s_hist[i]);
            let beta = rho * y_hist[i].dot(&q);
            q += &s_hist[i] * (alphas[i] - beta);
        }
        let mut direction = -q;
        let mut slope = direction.dot(&g_grad);
        if slope >= 0.0 {
            // non-descent direction from stale curvature; restart
            direction = -g_grad.clone();
            slope = direction.dot(&g_grad);
            s_hist.clear();
            y_hist.clear();
        }

        // backtracking Armijo line search on g
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &theta + &direction * step;
            match eval(&candidate) {
                Ok((cand_value, cand_grad))
                    if cand_value.is_finite() && cand_value <= g_value + 1e-4 * step * slope =>
                {
                    accepted = Some((candidate, cand_value, cand_grad));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let Some((new_theta, new_value, new_grad)) = accepted else {
            // no progress possible along this direction at representable
            // step sizes; report where we stopped
            return Ok(Outcome {
                theta,
                value: -g_value,
                grad_norm,
                iterations: iter,
                converged: grad_norm <= threshold,
            });
        };

        let s = &new_theta - &theta;
        let y = &new_grad - &g_grad;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        theta = new_theta;
        g_value = new_value;
        g_grad = new_grad;
    }

    let grad_norm = g_grad.amax();
    Ok(Outcome {
        theta,
        value: -g_value,
        grad_norm,
        iterations: max_iters,
        converged: grad_norm <= tol * g_value.abs().max(1.0),
    })
}
