//! Grouped Gaussian likelihood and the unconstrained parameterization
//! of (μ, Λ) with analytic gradients.
//!
//! Coordinates: `theta = [μ (p), t (p), u (p(p-1)/2)]` where σ = exp(t)
//! are the latent standard deviations and u are unconstrained
//! correlation-Cholesky coordinates: canonical partial correlations
//! c = tanh(u) build a unit-row-norm lower-triangular factor L with
//! C = L Lᵀ and Λ = diag(σ) C diag(σ).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{LatentParams, PriorSpec};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::linalg::SpdChol;

/// Records sharing an identical Ξ̂, reduced to sufficient statistics.
struct Group {
    xi: DMatrix<f64>,
    count: f64,
    /// Σᵢ Δ̂ᵢ
    s1: DVector<f64>,
    /// Σᵢ Δ̂ᵢ Δ̂ᵢᵀ
    s2: DMatrix<f64>,
    /// id of one member, for error messages
    witness: String,
}

/// Corpus reduced to per-Ξ̂ sufficient statistics in a canonical order,
/// making likelihood values bit-stable under record permutation.
pub struct GroupedCorpus {
    dim: usize,
    groups: Vec<Group>,
}

impl GroupedCorpus {
    pub fn build(corpus: &Corpus) -> GroupedCorpus {
        let p = corpus.dim();
        // canonical order: sort groups by the covariance's byte image and
        // members by id before accumulating
        let mut buckets: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
        for (i, rec) in corpus.records.iter().enumerate() {
            let key: Vec<u8> = rec
                .xi_hat
                .iter()
                .flat_map(|v| v.to_bits().to_be_bytes())
                .collect();
            buckets.entry(key).or_default().push(i);
        }
        let mut groups = Vec::with_capacity(buckets.len());
        for members in buckets.into_values() {
            let mut members = members;
            members.sort_by(|&a, &b| corpus.records[a].id.cmp(&corpus.records[b].id));
            let mut s1 = DVector::zeros(p);
            let mut s2 = DMatrix::zeros(p, p);
            for &i in &members {
                let y = &corpus.records[i].delta_hat;
                s1 += y;
                s2 += y * y.transpose();
            }
            groups.push(Group {
                xi: corpus.records[members[0]].xi_hat.clone(),
                count: members.len() as f64,
                s1,
                s2,
                witness: corpus.records[members[0]].id.clone(),
            });
        }
        GroupedCorpus { dim: p, groups }
    }

    fn sigma_chol(&self, group: &Group, lambda: &DMatrix<f64>) -> Result<SpdChol> {
        let sigma = lambda + &group.xi;
        if let Some(chol) = SpdChol::new(&sigma) {
            return Ok(chol);
        }
        // one bounded jitter, then give up
        let p = self.dim as f64;
        let jitter = 1e-12 * sigma.trace().abs().max(f64::MIN_POSITIVE) / p;
        let jittered = &sigma + DMatrix::from_diagonal_element(self.dim, self.dim, jitter);
        SpdChol::new(&jittered).ok_or_else(|| Error::SingularCovariance {
            id: group.witness.clone(),
        })
    }

    /// Σ groups [ −n/2·(p·ln 2π + ln det Σ) − ½ tr(Σ⁻¹ W(μ)) ].
    pub fn log_likelihood(&self, mu: &DVector<f64>, lambda: &DMatrix<f64>) -> Result<f64> {
        let p = self.dim;
        let mut total = 0.0;
        for group in &self.groups {
            let chol = self.sigma_chol(group, lambda)?;
            let scatter = self.centered_scatter(group, mu);
            let quad = chol.solve_mat(&scatter).trace();
            total += -0.5 * group.count * (p as f64 * (2.0 * PI).ln() + chol.log_det()) - 0.5 * quad;
        }
        Ok(total)
    }

    /// W(μ) = Σᵢ (yᵢ−μ)(yᵢ−μ)ᵀ via sufficient statistics.
    fn centered_scatter(&self, group: &Group, mu: &DVector<f64>) -> DMatrix<f64> {
        let cross = &group.s1 * mu.transpose();
        &group.s2 - &cross - cross.transpose() + (mu * mu.transpose()) * group.count
    }

    /// Likelihood with its gradients w.r.t. μ and the (full-matrix
    /// entrywise) gradient w.r.t. Λ.
    pub fn log_likelihood_grad(
        &self,
        mu: &DVector<f64>,
        lambda: &DMatrix<f64>,
    ) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let p = self.dim;
        let mut value = 0.0;
        let mut grad_mu = DVector::zeros(p);
        let mut grad_lambda = DMatrix::zeros(p, p);
        for group in &self.groups {
            let chol = self.sigma_chol(group, lambda)?;
            let sigma_inv = chol.inverse();
            let scatter = self.centered_scatter(group, mu);
            let sinv_scatter = &sigma_inv * &scatter;
            value +=
                -0.5 * group.count * (p as f64 * (2.0 * PI).ln() + chol.log_det())
                    - 0.5 * sinv_scatter.trace();
            grad_mu += &sigma_inv * (&group.s1 - mu * group.count);
            // ∂/∂Σ of the group term, entrywise on the full matrix
            grad_lambda += (&sinv_scatter * &sigma_inv - &sigma_inv * group.count) * 0.5;
        }
        Ok((value, grad_mu, grad_lambda))
    }
}

/// The unconstrained posterior model: priors, transform, and gradients.
pub struct UnconstrainedModel {
    dim: usize,
    prior: PriorSpec,
}

impl UnconstrainedModel {
    pub fn new(dim: usize, prior: PriorSpec) -> UnconstrainedModel {
        UnconstrainedModel { dim, prior }
    }

    pub fn theta_len(dim: usize) -> usize {
        2 * dim + dim * (dim - 1) / 2
    }

    fn split(theta: &DVector<f64>, dim: usize) -> (DVector<f64>, DVector<f64>, Vec<f64>) {
        let mu = theta.rows(0, dim).into_owned();
        let t = theta.rows(dim, dim).into_owned();
        let u = theta.rows(2 * dim, dim * (dim - 1) / 2).iter().copied().collect();
        (mu, t, u)
    }

    /// Build the unit-row-norm Cholesky factor L from partial
    /// correlations c (row-major strictly-lower order).
    fn corr_cholesky(c: &[f64], dim: usize) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(dim, dim);
        l[(0, 0)] = 1.0;
        let mut k = 0;
        for i in 1..dim {
            let mut s = 1.0;
            for j in 0..i {
                l[(i, j)] = c[k] * s;
                s *= (1.0 - c[k] * c[k]).sqrt();
                k += 1;
            }
            l[(i, i)] = s;
        }
        l
    }

    pub fn decode_params(theta: &DVector<f64>, dim: usize) -> LatentParams {
        let (mu, t, u) = Self::split(theta, dim);
        let c: Vec<f64> = u.iter().map(|&v| v.tanh()).collect();
        let l = Self::corr_cholesky(&c, dim);
        let sigma = t.map(f64::exp);
        let a = DMatrix::from_fn(dim, dim, |i, j| sigma[i] * l[(i, j)]);
        let lambda = &a * a.transpose();
        LatentParams { mu, lambda }
    }

    /// Encode a constrained (μ, Λ) point, clamping boundary values so the
    /// result is always a valid coordinate vector.
    pub fn encode(&self, params: &LatentParams) -> DVector<f64> {
        let p = self.dim;
        let sd_floor: f64 = 1e-4
            * self
                .prior
                .devscale
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
        let sigma = DVector::from_fn(p, |k, _| params.lambda[(k, k)].max(0.0).sqrt().max(sd_floor));
        // correlation matrix with boundary clamping
        let mut corr = DMatrix::identity(p, p);
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    let r = params.lambda[(i, j)] / (sigma[i] * sigma[j]);
                    corr[(i, j)] = r.clamp(-0.999, 0.999);
                }
            }
        }
        // recover partial correlations row by row, inverting the
        // corr_cholesky construction on the Cholesky factor of corr
        let l = crate::linalg::psd_factor(&((corr.clone() + DMatrix::identity(p, p) * 1e-9) / (1.0 + 1e-9)))
            .unwrap_or_else(|_| DMatrix::identity(p, p));
        let mut u = Vec::with_capacity(p * (p - 1) / 2);
        for i in 1..p {
            let mut s: f64 = 1.0;
            for j in 0..i {
                let c = if s > 1e-12 { (l[(i, j)] / s).clamp(-0.999999, 0.999999) } else { 0.0 };
                u.push(c.atanh());
                s *= (1.0 - c * c).sqrt();
            }
        }
        let mut theta = DVector::zeros(Self::theta_len(p));
        for k in 0..p {
            theta[k] = params.mu[k];
            theta[p + k] = sigma[k].ln();
        }
        for (idx, &v) in u.iter().enumerate() {
            theta[2 * p + idx] = v;
        }
        theta
    }

    /// Log posterior (likelihood + priors + transform Jacobian) and its
    /// analytic gradient in unconstrained coordinates.
    pub fn log_posterior_and_grad(
        &self,
        theta: &DVector<f64>,
        grouped: &GroupedCorpus,
    ) -> Result<(f64, DVector<f64>)> {
        let p = self.dim;
        assert_eq!(theta.len(), Self::theta_len(p));
        let (mu, t, u) = Self::split(theta, p);
        let sigma = t.map(f64::exp);
        let c: Vec<f64> = u.iter().map(|&v| v.tanh()).collect();
        let l = Self::corr_cholesky(&c, p);
        let a = DMatrix::from_fn(p, p, |i, j| sigma[i] * l[(i, j)]);
        let lambda = &a * a.transpose();

        let (ll, grad_mu_ll, grad_lambda) = grouped.log_likelihood_grad(&mu, &lambda)?;

        let mut value = ll;
        let mut grad = DVector::zeros(theta.len());

        // chain Λ = A Aᵀ, A = diag(σ) L
        let grad_a = 2.0 * &grad_lambda * &a;
        // per-entry gradients on L and per-coordinate on t
        let mut grad_l = DMatrix::zeros(p, p);
        for i in 0..p {
            let mut gt = 0.0;
            for j in 0..=i {
                grad_l[(i, j)] = sigma[i] * grad_a[(i, j)];
                gt += grad_a[(i, j)] * l[(i, j)] * sigma[i];
            }
            grad[p + i] = gt;
        }

        // μ prior: N(0, (1000·meanscale)²)
        for k in 0..p {
            let std = 1000.0 * self.prior.meanscale[k];
            value += -0.5 * (2.0 * PI).ln() - std.ln() - 0.5 * (mu[k] / std).powi(2);
            grad[k] = grad_mu_ll[k] - mu[k] / (std * std);
        }

        // Half-Cauchy prior on σ plus the t → σ Jacobian (log σ term)
        for k in 0..p {
            let scale = self.prior.halfcauchy_multiplier * self.prior.devscale[k];
            value += (2.0 / PI).ln() - scale.ln() - (1.0 + (sigma[k] / scale).powi(2)).ln();
            value += t[k];
            grad[p + k] += -2.0 * sigma[k] * sigma[k] / (scale * scale + sigma[k] * sigma[k]) + 1.0;
        }

        // LKJ-Cholesky density on L: Σ_{i≥1} (p − i + 2η − 3) ln L_ii
        let eta = self.prior.lkj_concentration;
        for i in 1..p {
            let coef = (p as f64) - (i as f64) + 2.0 * eta - 3.0;
            value += coef * l[(i, i)].ln();
            grad_l[(i, i)] += coef / l[(i, i)];
        }

        // log-Jacobian of u → L: per entry (i,j) the tanh part contributes
        // ln(1−c²) and the row prefix products add (i−1−j)/2 · ln(1−c²);
        // in u the combined derivative is −(i+1−j)·c
        let mut k = 0;
        for i in 1..p {
            for j in 0..i {
                let one_m = 1.0 - c[k] * c[k];
                value += (1.0 + (i - 1 - j) as f64 / 2.0) * one_m.ln();
                grad[2 * p + k] = -((i + 1 - j) as f64) * c[k];
                k += 1;
            }
        }

        // backprop grad_l through the corr-Cholesky construction to u
        let mut k = 0;
        for i in 1..p {
            // prefix products s_j = ∏_{m<j} sqrt(1−c_{im}²)
            let row = &c[k..k + i];
            let mut s = vec![1.0; i + 1];
            for j in 0..i {
                s[j + 1] = s[j] * (1.0 - row[j] * row[j]).sqrt();
            }
            // suffix sums T_m = Σ_{j>m}^{i} grad_l[i][j]·L[i][j]
            let mut suffix = vec![0.0; i + 1];
            let mut acc = grad_l[(i, i)] * l[(i, i)];
            suffix[i] = 0.0;
            for j in (0..i).rev() {
                suffix[j] = acc;
                acc += grad_l[(i, j)] * l[(i, j)];
            }
            for j in 0..i {
                let one_m = 1.0 - row[j] * row[j];
                let dc = grad_l[(i, j)] * s[j] - suffix[j] * row[j] / one_m;
                grad[2 * p + k + j] += dc * one_m;
            }
            k += i;
        }

        Ok((value, grad))
    }
}
