//! Inference of the latent treatment-effect population (μ, Λ) from a
//! noisy corpus.
//!
//! The generative model is two-level Gaussian,
//!
//! ```text
//! Δᵢ  ~ MVN(μ, Λ)
//! Δ̂ᵢ | Δᵢ ~ MVN(Δᵢ, Ξᵢ)
//! ```
//!
//! which marginalizes to Δ̂ᵢ ~ MVN(μ, Λ + Ξᵢ) with the record's Ξ̂ᵢ used
//! as a plug-in for Ξᵢ. The posterior augments the likelihood with weak
//! priors: Gaussian on μ, Half-Cauchy on the latent standard deviations,
//! and LKJ on the correlation factor. MAP over this posterior is the
//! default inference path; an adaptive-Metropolis MCMC over the same
//! posterior provides posterior means with r-hat gating.

mod lbfgs;
mod mcmc;
mod model;

pub use mcmc::{McmcDiagnostics, ParamDiagnostic};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::linalg;

use model::{GroupedCorpus, UnconstrainedModel};

/// The fitted population model: mean vector and latent covariance over
/// `[long-term, proxy_1..proxy_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentParams {
    pub mu: DVector<f64>,
    pub lambda: DMatrix<f64>,
}

impl LatentParams {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn num_proxies(&self) -> usize {
        self.mu.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.nrows() != self.mu.len() || self.lambda.ncols() != self.mu.len() {
            return Err(Error::Invalid("lambda dimension must match mu".into()));
        }
        if !self.mu.iter().all(|v| v.is_finite()) || !self.lambda.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("non-finite latent parameter".into()));
        }
        linalg::check_psd(&self.lambda, "lambda")
    }

    /// Λᴺᴾ as a length-d vector.
    pub fn lambda_np(&self) -> DVector<f64> {
        let d = self.num_proxies();
        self.lambda.view((0, 1), (1, d)).transpose().column(0).into_owned()
    }

    /// Λᴾᴾ block.
    pub fn lambda_pp(&self) -> DMatrix<f64> {
        let d = self.num_proxies();
        self.lambda.view((1, 1), (d, d)).into_owned()
    }
}

/// JSON form of fitted latent parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentParamsFile {
    pub mu: Vec<f64>,
    pub lambda_lower: Vec<f64>,
}

impl From<&LatentParams> for LatentParamsFile {
    fn from(p: &LatentParams) -> Self {
        LatentParamsFile {
            mu: p.mu.iter().copied().collect(),
            lambda_lower: linalg::pack_lower(&p.lambda),
        }
    }
}

impl LatentParamsFile {
    pub fn into_params(self) -> Result<LatentParams> {
        let p = self.mu.len();
        if linalg::tri_dim(self.lambda_lower.len()) != Some(p) {
            return Err(Error::Invalid("lambda_lower length inconsistent with mu".into()));
        }
        let params = LatentParams {
            mu: DVector::from_vec(self.mu),
            lambda: linalg::unpack_lower(&self.lambda_lower, p),
        };
        params.validate()?;
        Ok(params)
    }
}

/// Weak-prior scales, per metric.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    /// Scale of the raw corpus means; μ_k ~ N(0, (1000·meanscale_k)²).
    pub meanscale: DVector<f64>,
    /// Scale of the raw corpus standard deviations; the latent standard
    /// deviation σ_k gets a Half-Cauchy with scale
    /// `halfcauchy_multiplier · devscale_k`.
    pub devscale: DVector<f64>,
    /// LKJ concentration η on the correlation factor; 1 is uniform.
    pub lkj_concentration: f64,
    /// Multiplier on devscale inside the Half-Cauchy scale.
    pub halfcauchy_multiplier: f64,
}

impl PriorSpec {
    pub fn new(meanscale: DVector<f64>, devscale: DVector<f64>) -> Result<Self> {
        let spec = PriorSpec {
            meanscale,
            devscale,
            lkj_concentration: 1.0,
            halfcauchy_multiplier: 1.5,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.meanscale.len() != self.devscale.len() {
            return Err(Error::Invalid("meanscale/devscale length mismatch".into()));
        }
        if !self.meanscale.iter().all(|&v| v > 0.0) || !self.devscale.iter().all(|&v| v > 0.0) {
            return Err(Error::Invalid("prior scales must be strictly positive".into()));
        }
        if self.lkj_concentration <= 0.0 {
            return Err(Error::Invalid("lkj_concentration must be positive".into()));
        }
        Ok(())
    }
}

/// Derive prior scales from the corpus raw moments.
pub fn auto_prior(corpus: &Corpus) -> Result<PriorSpec> {
    if corpus.is_empty() {
        return Err(Error::Invalid("cannot derive priors from an empty corpus".into()));
    }
    let p = corpus.dim();
    let mean = corpus.sample_mean();
    let sd = if corpus.len() > 1 {
        corpus.sample_covariance().diagonal().map(f64::sqrt)
    } else {
        DVector::zeros(p)
    };
    let floor = 1e-8;
    let meanscale = DVector::from_fn(p, |k, _| mean[k].abs().max(sd[k]).max(floor));
    let devscale = DVector::from_fn(p, |k, _| sd[k].max(mean[k].abs()).max(floor));
    PriorSpec::new(meanscale, devscale)
}

/// Inference backend selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InferenceMethod {
    #[default]
    Map,
    Mcmc,
}

/// Knobs for both inference paths.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub method: InferenceMethod,
    pub map_max_iters: usize,
    /// Gradient max-norm threshold in unconstrained coordinates, relative
    /// to the posterior magnitude.
    pub map_grad_tol: f64,
    pub mcmc_chains: usize,
    pub mcmc_warmup: usize,
    pub mcmc_samples: usize,
    pub rhat_threshold: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            method: InferenceMethod::Map,
            map_max_iters: 2000,
            map_grad_tol: 1e-6,
            mcmc_chains: 4,
            mcmc_warmup: 10_000,
            mcmc_samples: 50_000,
            rhat_threshold: 1.01,
            seed: 0,
        }
    }
}

/// Σᵢ log MVN-density(Δ̂ᵢ; μ, Λ + Ξ̂ᵢ).
///
/// Records are grouped by identical Ξ̂ and reduced through sufficient
/// statistics in a canonical order, so the value is bit-stable under
/// permutation of the corpus.
pub fn marginal_log_likelihood(params: &LatentParams, corpus: &Corpus) -> Result<f64> {
    params.validate()?;
    if corpus.dim() != params.dim() {
        return Err(Error::Invalid("corpus/params dimension mismatch".into()));
    }
    let grouped = GroupedCorpus::build(corpus);
    grouped.log_likelihood(&params.mu, &params.lambda)
}

/// Log posterior density (including the log-Jacobian of the
/// unconstrained parameterization) at unconstrained coordinates
/// `theta = [μ, log σ, corr coords]`, together with its analytic
/// gradient. Exposed for gradient-check tests and samplers.
pub fn log_posterior_and_grad(
    theta: &DVector<f64>,
    prior: &PriorSpec,
    corpus: &Corpus,
) -> Result<(f64, DVector<f64>)> {
    prior.validate()?;
    let grouped = GroupedCorpus::build(corpus);
    let model = UnconstrainedModel::new(corpus.dim(), prior.clone());
    model.log_posterior_and_grad(theta, &grouped)
}

/// Number of unconstrained coordinates for a (d+1)-dimensional model.
pub fn theta_len(dim: usize) -> usize {
    UnconstrainedModel::theta_len(dim)
}

/// Map a constrained (μ, Λ) pair to unconstrained coordinates. Used for
/// initialization; clamps boundary correlations.
pub fn to_unconstrained(params: &LatentParams, prior: &PriorSpec) -> DVector<f64> {
    let model = UnconstrainedModel::new(params.dim(), prior.clone());
    model.encode(params)
}

/// Inverse of [`to_unconstrained`]: reconstruct (μ, Λ) from coordinates.
pub fn from_unconstrained(theta: &DVector<f64>, dim: usize) -> LatentParams {
    UnconstrainedModel::decode_params(theta, dim)
}

fn initial_params(corpus: &Corpus) -> LatentParams {
    let p = corpus.dim();
    let mu = corpus.sample_mean();
    let lambda = if corpus.len() > 1 {
        let sample_cov = corpus.sample_covariance();
        let mean_xi = corpus
            .records
            .iter()
            .map(|r| r.xi_hat.clone())
            .sum::<DMatrix<f64>>()
            / corpus.len() as f64;
        linalg::project_psd(&(sample_cov - mean_xi))
    } else {
        DMatrix::zeros(p, p)
    };
    LatentParams { mu, lambda }
}

fn check_corpus_size(corpus: &Corpus) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::Invalid("cannot fit an empty corpus".into()));
    }
    let p = corpus.dim();
    if corpus.len() < p + 1 {
        eprintln!(
            "warning: corpus has K={} records for a {p}-dimensional model; \
             the fit will be prior-dominated (K >= {} recommended)",
            corpus.len(),
            p + 1
        );
    }
    Ok(())
}

/// MAP estimate of (μ, Λ) over the augmented posterior, via L-BFGS in
/// unconstrained coordinates.
pub fn fit_map(corpus: &Corpus, prior: &PriorSpec, config: &FitConfig) -> Result<LatentParams> {
    check_corpus_size(corpus)?;
    prior.validate()?;
    if prior.meanscale.len() != corpus.dim() {
        return Err(Error::Invalid("prior dimension mismatch".into()));
    }
    let grouped = GroupedCorpus::build(corpus);
    let model = UnconstrainedModel::new(corpus.dim(), prior.clone());
    let theta0 = model.encode(&initial_params(corpus));

    let objective = |theta: &DVector<f64>| model.log_posterior_and_grad(theta, &grouped);
    let outcome = lbfgs::maximize(objective, &theta0, config.map_max_iters, config.map_grad_tol)?;
    if !outcome.converged {
        return Err(Error::NonConvergence {
            iters: outcome.iterations,
            grad_norm: outcome.grad_norm,
        });
    }
    let params = UnconstrainedModel::decode_params(&outcome.theta, corpus.dim());
    params.validate()?;
    Ok(params)
}

/// Full-posterior sampling via adaptive random-walk Metropolis; returns
/// posterior means of (μ, Λ) reconstructed per draw, with per-parameter
/// r-hat and effective sample size. A result exceeding the r-hat
/// threshold is returned flagged, not discarded.
pub fn fit_mcmc(
    corpus: &Corpus,
    prior: &PriorSpec,
    config: &FitConfig,
) -> Result<(LatentParams, McmcDiagnostics)> {
    check_corpus_size(corpus)?;
    prior.validate()?;
    if prior.meanscale.len() != corpus.dim() {
        return Err(Error::Invalid("prior dimension mismatch".into()));
    }
    let grouped = GroupedCorpus::build(corpus);
    let model = UnconstrainedModel::new(corpus.dim(), prior.clone());
    let theta0 = model.encode(&initial_params(corpus));
    mcmc::run(&model, &grouped, &theta0, config)
}

/// Sample-splitting moment estimator of (μ, Λ) from paired unbiased
/// estimates of the same latent effects. The cross-covariance is
/// symmetrized; the result carries no PSD guarantee.
pub fn moment_estimator(
    paired: &[(DVector<f64>, DVector<f64>)],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if paired.len() < 2 {
        return Err(Error::Invalid("moment estimator needs at least 2 pairs".into()));
    }
    let p = paired[0].0.len();
    for (a, b) in paired {
        if a.len() != p || b.len() != p {
            return Err(Error::Invalid("split length mismatch".into()));
        }
    }
    let k = paired.len() as f64;
    let mean1 = paired.iter().map(|(a, _)| a).sum::<DVector<f64>>() / k;
    let mean2 = paired.iter().map(|(_, b)| b).sum::<DVector<f64>>() / k;
    let mut cross = DMatrix::zeros(p, p);
    for (a, b) in paired {
        cross += (a - &mean1) * (b - &mean2).transpose();
    }
    cross /= k - 1.0;
    let lambda_hat = (&cross + cross.transpose()) * 0.5;
    let mu_hat = (mean1 + mean2) * 0.5;
    Ok((mu_hat, lambda_hat))
}
