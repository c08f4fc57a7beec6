//! Seeded generator for synthetic corpora from the two-level Gaussian
//! model
//!
//! ```text
//! Δᵢ  ~ MVN(μ, Λ)
//! Δ̂ᵢ | Δᵢ ~ MVN(Δᵢ, Ξᵢ)
//! ```
//!
//! Every ground-truth-based test in the crate runs on corpora produced
//! here. The generator also returns the latent draws so test oracles can
//! compare against the truth; the latents are never written into the
//! corpus itself.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ExperimentRecord, MetricSchema};
use crate::error::{Error, Result};
use crate::linalg;

/// Per-record noise: either explicit covariances, or a reference matrix
/// scaled as Ξᵢ = Ξ_ref / nᵢ.
#[derive(Debug, Clone)]
pub enum NoiseSpec {
    Explicit(Vec<DMatrix<f64>>),
    Scaled { xi_ref: DMatrix<f64>, sizes: Vec<u64> },
}

/// Full specification of a synthetic corpus.
#[derive(Debug, Clone)]
pub struct GenSpec {
    pub mu: DVector<f64>,
    pub lambda: DMatrix<f64>,
    pub noise: NoiseSpec,
    pub count: usize,
    pub seed: u64,
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count < 1 {
            return Err(Error::Invalid("K must be >= 1".into()));
        }
        let p = self.mu.len();
        if self.lambda.nrows() != p || self.lambda.ncols() != p {
            return Err(Error::Invalid("lambda dimension must match mu".into()));
        }
        linalg::check_psd(&self.lambda, "lambda")?;
        match &self.noise {
            NoiseSpec::Explicit(xis) => {
                if xis.len() != self.count {
                    return Err(Error::Invalid("explicit noise list length must equal K".into()));
                }
                for (i, xi) in xis.iter().enumerate() {
                    if xi.nrows() != p {
                        return Err(Error::Invalid(format!("noise matrix {i} has wrong dimension")));
                    }
                    linalg::check_psd(xi, &format!("xi[{i}]"))?;
                }
            }
            NoiseSpec::Scaled { xi_ref, sizes } => {
                if sizes.len() != self.count {
                    return Err(Error::Invalid("sizes length must equal K".into()));
                }
                if sizes.iter().any(|&n| n < 1) {
                    return Err(Error::Invalid("sizes must be >= 1".into()));
                }
                if xi_ref.nrows() != p {
                    return Err(Error::Invalid("xi_ref dimension must match mu".into()));
                }
                linalg::check_psd(xi_ref, "xi_ref")?;
            }
        }
        Ok(())
    }
}

/// JSON mirror of [`GenSpec`] for the `synth` subcommand. Matrices are
/// stored as row-major lower triangles, like the corpus file format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenSpecFile {
    pub mu: Vec<f64>,
    pub lambda_lower: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_lower: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_ref_lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<u64>>,
    pub count: usize,
    pub seed: u64,
}

impl GenSpecFile {
    pub fn into_spec(self) -> Result<GenSpec> {
        let p = self.mu.len();
        if linalg::tri_dim(self.lambda_lower.len()) != Some(p) {
            return Err(Error::Invalid("lambda_lower length inconsistent with mu".into()));
        }
        let noise = match (self.xi_lower, self.xi_ref_lower, self.sizes) {
            (Some(list), None, None) => NoiseSpec::Explicit(
                list.iter().map(|tri| linalg::unpack_lower(tri, p)).collect(),
            ),
            (None, Some(tri), Some(sizes)) => NoiseSpec::Scaled {
                xi_ref: linalg::unpack_lower(&tri, p),
                sizes,
            },
            _ => {
                return Err(Error::Invalid(
                    "noise must be either xi_lower, or xi_ref_lower with sizes".into(),
                ))
            }
        };
        let spec = GenSpec {
            mu: DVector::from_vec(self.mu),
            lambda: linalg::unpack_lower(&self.lambda_lower, p),
            noise,
            count: self.count,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// One MVN draw via a (semidefinite-tolerant) Cholesky transform of
/// standard normals. Deterministic given the rng state.
pub fn sample_mvn<R: Rng>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let p = mean.len();
    let factor = linalg::psd_factor(cov)?;
    let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mean + factor * z)
}

/// Generate a corpus and the latent truth behind it.
///
/// Record ids are `syn-000000`, `syn-000001`, ... and the schema names
/// the metrics `long_term`, `proxy_1`, ..., `proxy_d`. Each record's
/// `xi_hat` is the exact noise covariance used, not a re-estimate.
pub fn generate(spec: &GenSpec) -> Result<(Corpus, Vec<DVector<f64>>)> {
    spec.validate()?;
    let p = spec.mu.len();
    let d = p - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let xi = |i: usize| -> DMatrix<f64> {
        match &spec.noise {
            NoiseSpec::Explicit(list) => list[i].clone(),
            NoiseSpec::Scaled { xi_ref, sizes } => xi_ref / sizes[i] as f64,
        }
    };
    let n_of = |i: usize| -> u64 {
        match &spec.noise {
            NoiseSpec::Explicit(_) => 1,
            NoiseSpec::Scaled { sizes, .. } => sizes[i],
        }
    };

    let mut latents = Vec::with_capacity(spec.count);
    let mut records = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let latent = sample_mvn(&spec.mu, &spec.lambda, &mut rng)?;
        let noise_cov = xi(i);
        let delta_hat = sample_mvn(&latent, &noise_cov, &mut rng)?;
        records.push(ExperimentRecord::new(
            format!("syn-{i:06}"),
            n_of(i),
            delta_hat,
            noise_cov,
        )?);
        latents.push(latent);
    }

    let schema = MetricSchema::new(
        "long_term",
        (1..=d).map(|j| format!("proxy_{j}")).collect(),
    )?;
    Ok((Corpus::new(schema, records)?, latents))
}
