//! Reference noise covariance and the 1/n scaling law.
//!
//! Under the ansatz Ξᵢ = Ξ_ref/nᵢ, the reference matrix (the covariance
//! of a hypothetical size-1 experiment) is estimated as a convex
//! combination Ξ̂_ref = Σᵢ γᵢ nᵢ Ξ̂ᵢ, precision-weighted with γᵢ ∝ nᵢ by
//! default. `fit_power_law` regresses log variance on log n as a
//! diagnostic for the ansatz: an exponent near −1 supports it.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::linalg;

/// Reference within-experiment covariance with its 1/n scaling law.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    /// Covariance of a size-1 experiment, full (d+1)x(d+1).
    pub xi_ref: DMatrix<f64>,
    /// Number of corpus records the fit used.
    pub source_count: usize,
}

impl NoiseModel {
    /// Proxy-block (d x d) view of `xi_ref`, dropping the long-term
    /// row/column.
    pub fn xi_ref_pp(&self) -> DMatrix<f64> {
        let d = self.xi_ref.nrows() - 1;
        self.xi_ref.view((1, 1), (d, d)).into_owned()
    }
}

/// Weighting scheme for combining per-record covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefWeighting {
    /// γᵢ ∝ nᵢ.
    #[default]
    Precision,
    /// γᵢ = 1/K.
    Equal,
}

/// Estimate Ξ_ref from the corpus with the given weighting.
pub fn estimate_xi_ref_weighted(corpus: &Corpus, weighting: RefWeighting) -> Result<NoiseModel> {
    if corpus.is_empty() {
        return Err(Error::Invalid("cannot estimate xi_ref from an empty corpus".into()));
    }
    let p = corpus.dim();
    let total_n: f64 = corpus.records.iter().map(|r| r.n as f64).sum();
    let k = corpus.len() as f64;
    let mut xi_ref = DMatrix::zeros(p, p);
    for rec in &corpus.records {
        let n = rec.n as f64;
        let gamma = match weighting {
            RefWeighting::Precision => n / total_n,
            RefWeighting::Equal => 1.0 / k,
        };
        xi_ref += gamma * n * &rec.xi_hat;
    }
    let xi_ref = (&xi_ref + xi_ref.transpose()) * 0.5;
    Ok(NoiseModel {
        xi_ref,
        source_count: corpus.len(),
    })
}

/// Precision-weighted estimate of Ξ_ref (the default scheme).
pub fn estimate_xi_ref(corpus: &Corpus) -> Result<NoiseModel> {
    estimate_xi_ref_weighted(corpus, RefWeighting::Precision)
}

/// Predicted noise covariance Ξ_ref/n for a new experiment of size n.
pub fn predict_xi(model: &NoiseModel, n: u64) -> Result<DMatrix<f64>> {
    if n < 1 {
        return Err(Error::Invalid("n must be >= 1".into()));
    }
    Ok(&model.xi_ref / n as f64)
}

/// Result of the log-log regression of within-experiment variance on
/// sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub log_prefactor: f64,
    pub r_squared: f64,
}

/// OLS of log Ξ̂ᵢ[m,m] on log nᵢ for the metric at `metric_index`
/// (0 = long-term outcome, j = proxy j).
pub fn fit_power_law(corpus: &Corpus, metric_index: usize) -> Result<PowerLawFit> {
    if corpus.len() < 3 {
        return Err(Error::Invalid("power-law fit needs at least 3 records".into()));
    }
    if metric_index >= corpus.dim() {
        return Err(Error::Invalid("metric_index out of range".into()));
    }
    let mut xs = Vec::with_capacity(corpus.len());
    let mut ys = Vec::with_capacity(corpus.len());
    for rec in &corpus.records {
        let var = rec.xi_hat[(metric_index, metric_index)];
        if var <= 0.0 {
            return Err(Error::Invalid(format!(
                "record '{}': variance of metric {metric_index} is not positive",
                rec.id
            )));
        }
        xs.push((rec.n as f64).ln());
        ys.push(var.ln());
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("all sample sizes identical: exponent unidentifiable".into()));
    }
    let exponent = sxy / sxx;
    let log_prefactor = my - exponent * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(PowerLawFit {
        exponent,
        log_prefactor,
        r_squared,
    })
}

/// JSON form of a fitted noise model (lower-triangular xi_ref).
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct NoiseModelFile {
    pub xi_ref_lower: Vec<f64>,
    pub source_count: usize,
}

impl From<&NoiseModel> for NoiseModelFile {
    fn from(model: &NoiseModel) -> Self {
        NoiseModelFile {
            xi_ref_lower: linalg::pack_lower(&model.xi_ref),
            source_count: model.source_count,
        }
    }
}

impl NoiseModelFile {
    pub fn into_model(self) -> Result<NoiseModel> {
        let p = linalg::tri_dim(self.xi_ref_lower.len())
            .ok_or_else(|| Error::Invalid("xi_ref_lower has non-triangular length".into()))?;
        Ok(NoiseModel {
            xi_ref: linalg::unpack_lower(&self.xi_ref_lower, p),
            source_count: self.source_count,
        })
    }
}
