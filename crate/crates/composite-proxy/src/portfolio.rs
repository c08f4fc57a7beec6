//! Proxy-quality computation and Sharpe-ratio weight optimization.
//!
//! The quality of a composite proxy with weights w is the correlation
//!
//! ```text
//! ρ = (1/√Λᴺᴺ) · wᵀΛᴺᴾ / √(wᵀ(Λᴾᴾ + Ξᴾᴾ)w)
//! ```
//!
//! Maximizing ρ over the simplex is a Sharpe-ratio problem; the
//! Charnes-Cooper transform reduces it to the convex quadratic program
//!
//! ```text
//! min xᵀΣx  :  x ≥ 0,  rᵀx = 1
//! ```
//!
//! with Σ = Λᴾᴾ + Ξᴾᴾ and r = Λᴺᴾ, whose solution is recovered as
//! w = x/‖x‖₁.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::denoise::LatentParams;
use crate::error::{Error, Result};
use crate::linalg::SpdChol;

/// Simplex weight vector and the composite proxy quality it achieves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyWeights {
    pub w: Vec<f64>,
    pub rho: f64,
}

/// The quadratic program behind the Sharpe-ratio maximization.
#[derive(Debug, Clone)]
pub struct QPProblem {
    /// Λᴾᴾ + Ξ̂ᴾᴾ, symmetric PSD.
    pub sigma: DMatrix<f64>,
    /// Λᴺᴾ, the "returns" vector; at least one entry must be positive.
    pub r: DVector<f64>,
}

/// Quality of a single noisy proxy: corr(Δᴺ, Δᴾ) / √(1 + Ξᴾᴾ/Var(Δᴾ)).
pub fn proxy_quality_single(corr_np: f64, var_p: f64, xi_pp: f64) -> Result<f64> {
    if var_p <= 0.0 {
        return Err(Error::Invalid("var_p must be positive".into()));
    }
    if corr_np.abs() > 1.0 {
        return Err(Error::Invalid("corr_np must lie in [-1, 1]".into()));
    }
    if xi_pp < 0.0 {
        return Err(Error::Invalid("xi_pp must be nonnegative".into()));
    }
    Ok(corr_np / (1.0 + xi_pp / var_p).sqrt())
}

/// Composite proxy quality ρ for weights `w` against the latent model and
/// a proxy-block noise covariance.
pub fn composite_quality(w: &DVector<f64>, latent: &LatentParams, xi_pp: &DMatrix<f64>) -> Result<f64> {
    let d = w.len();
    let lambda = &latent.lambda;
    if lambda.nrows() != d + 1 || xi_pp.nrows() != d {
        return Err(Error::Invalid("dimension mismatch in composite_quality".into()));
    }
    let var_n = lambda[(0, 0)];
    if var_n <= 0.0 {
        return Err(Error::Invalid("Λᴺᴺ must be positive".into()));
    }
    let lambda_np = lambda.view((0, 1), (1, d)).transpose();
    let lambda_pp = lambda.view((1, 1), (d, d));
    let numer = w.dot(&lambda_np);
    let denom_sq = (w.transpose() * (lambda_pp + xi_pp) * w)[(0, 0)];
    if denom_sq <= 0.0 {
        return Err(Error::Invalid(
            "degenerate covariance along w: zero denominator".into(),
        ));
    }
    Ok(numer / (var_n.sqrt() * denom_sq.sqrt()))
}

fn kkt_on_support(
    sigma: &DMatrix<f64>,
    r: &DVector<f64>,
    support: &[usize],
) -> Option<(DVector<f64>, f64)> {
    let m = support.len();
    let sigma_s = DMatrix::from_fn(m, m, |i, j| sigma[(support[i], support[j])]);
    let r_s = DVector::from_fn(m, |i, _| r[support[i]]);
    let chol = SpdChol::new(&sigma_s)?;
    let sinv_r = chol.solve(&r_s);
    let quad = r_s.dot(&sinv_r);
    if quad <= 0.0 {
        return None;
    }
    let x_s = sinv_r / quad;
    let mut x = DVector::zeros(sigma.nrows());
    for (i, &idx) in support.iter().enumerate() {
        x[idx] = x_s[i];
    }
    // objective xᵀΣx = 1/(rᵀΣ⁻¹r) on this support
    Some((x, 1.0 / quad))
}

fn ensure_regular(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    if SpdChol::new(sigma).is_some() {
        return sigma.clone();
    }
    let d = sigma.nrows();
    let jitter = 1e-12 * sigma.trace().abs().max(f64::MIN_POSITIVE) / d as f64;
    sigma + DMatrix::from_diagonal_element(d, d, jitter)
}

/// Solve min xᵀΣx : x ≥ 0, rᵀx = 1 by exact enumeration of support sets
/// (all 2^d − 1 of them) for small d, or an iterative active-set loop
/// otherwise. Returns x and the equality multiplier ν.
pub fn solve_qp(problem: &QPProblem) -> Result<(DVector<f64>, f64)> {
    let d = problem.r.len();
    if problem.sigma.nrows() != d || problem.sigma.ncols() != d {
        return Err(Error::Invalid("sigma/r dimension mismatch".into()));
    }
    if !problem.r.iter().any(|&ri| ri > 0.0) {
        return Err(Error::NoPositiveReturn);
    }
    let sigma = ensure_regular(&problem.sigma);

    let best = if d <= 12 {
        solve_by_enumeration(&sigma, &problem.r)
    } else {
        solve_active_set(&sigma, &problem.r)
    };
    let (x, obj) = best.ok_or_else(|| Error::Invalid("no feasible support found".into()))?;
    let nu = 2.0 * obj;
    Ok((x, nu))
}

fn solve_by_enumeration(sigma: &DMatrix<f64>, r: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let d = r.len();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 1u32..(1 << d) {
        let support: Vec<usize> = (0..d).filter(|i| mask >> i & 1 == 1).collect();
        let Some((x, obj)) = kkt_on_support(sigma, r, &support) else {
            continue;
        };
        if x.iter().any(|&xi| xi < -1e-12) {
            continue;
        }
        match &best {
            Some((bx, bobj)) => {
                let rel = (obj - bobj) / bobj.abs().max(f64::MIN_POSITIVE);
                if rel < -1e-12 || (rel.abs() <= 1e-12 && x.norm() < bx.norm()) {
                    best = Some((x, obj));
                }
            }
            None => best = Some((x, obj)),
        }
    }
    best
}

fn solve_active_set(sigma: &DMatrix<f64>, r: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let d = r.len();
    // start from the best single positive-return asset
    let start = (0..d)
        .filter(|&i| r[i] > 0.0)
        .max_by(|&a, &b| {
            let qa = r[a] * r[a] / sigma[(a, a)];
            let qb = r[b] * r[b] / sigma[(b, b)];
            qa.partial_cmp(&qb).unwrap()
        })?;
    let mut support = vec![start];
    let scale = sigma.trace() / d as f64;
    for _ in 0..4 * d * d {
        let (x, obj) = kkt_on_support(sigma, r, &support)?;
        // drop the most negative coordinate, if any
        if let Some((pos, _)) = support
            .iter()
            .enumerate()
            .map(|(k, &i)| (k, x[i]))
            .filter(|&(_, xi)| xi < -1e-12)
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        {
            support.remove(pos);
            continue;
        }
        // KKT: for inactive coordinates require (2Σx − νr)ᵢ ≥ 0
        let nu = 2.0 * obj;
        let grad = 2.0 * sigma * &x - nu * r;
        let violator = (0..d)
            .filter(|i| !support.contains(i))
            .filter(|&i| grad[i] < -1e-10 * scale.max(1.0))
            .min_by(|&a, &b| grad[a].partial_cmp(&grad[b]).unwrap());
        match violator {
            Some(i) => support.push(i),
            None => return Some((x, obj)),
        }
    }
    None
}

/// Optimal simplex weights for the latent model and noise level: builds
/// the QP, solves it, and normalizes to the simplex.
pub fn optimize_weights(latent: &LatentParams, xi_pp: &DMatrix<f64>) -> Result<ProxyWeights> {
    let d = latent.num_proxies();
    if xi_pp.nrows() != d || xi_pp.ncols() != d {
        return Err(Error::Invalid("xi_pp dimension mismatch".into()));
    }
    let lambda_np = latent.lambda_np();
    let lambda_pp = latent.lambda.view((1, 1), (d, d)).into_owned();
    let problem = QPProblem {
        sigma: lambda_pp + xi_pp,
        r: lambda_np,
    };
    let (x, _) = solve_qp(&problem)?;
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    let mut w = x / l1;
    for wi in w.iter_mut() {
        if *wi < 0.0 && *wi > -1e-12 {
            *wi = 0.0;
        }
    }
    let rho = composite_quality(&w, latent, xi_pp)?;
    Ok(ProxyWeights {
        w: w.iter().copied().collect(),
        rho,
    })
}

/// Probability of a signed alignment Pr(Δᴺ > 0, wᵀΔ̂ᴾ > 0) under the
/// centered Gaussian model: ¼ + asin(ρ)/(2π).
pub fn alignment_probability(rho: f64) -> Result<f64> {
    if rho.abs() > 1.0 {
        return Err(Error::Invalid("rho must lie in [-1, 1]".into()));
    }
    Ok(0.25 + rho.asin() / (2.0 * PI))
}

/// Exhaustive simplex-grid maximizer of [`composite_quality`], used as a
/// brute-force oracle in tests. `step` divides 1 exactly (e.g. 0.01).
pub fn grid_best_quality(latent: &LatentParams, xi_pp: &DMatrix<f64>, step: f64) -> Result<(DVector<f64>, f64)> {
    let d = latent.num_proxies();
    let ticks = (1.0 / step).round() as usize;
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut counts = vec![0usize; d];
    enumerate_compositions(ticks, d, 0, &mut counts, &mut |counts| {
        let w = DVector::from_fn(d, |i, _| counts[i] as f64 / ticks as f64);
        if let Ok(q) = composite_quality(&w, latent, xi_pp) {
            if best.as_ref().map_or(true, |(_, bq)| q > *bq) {
                best = Some((w, q));
            }
        }
    });
    best.ok_or_else(|| Error::Invalid("no feasible grid point".into()))
}

fn enumerate_compositions(
    remaining: usize,
    d: usize,
    idx: usize,
    counts: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if idx == d - 1 {
        counts[idx] = remaining;
        f(counts);
        return;
    }
    for c in 0..=remaining {
        counts[idx] = c;
        enumerate_compositions(remaining - c, d, idx + 1, counts, f);
    }
}
