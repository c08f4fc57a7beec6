//! End-to-end orchestration: corpus → latent fit → noise model →
//! per-experiment proxy weights, with JSON/CSV artifacts on disk.
//!
//! Stages run in a fixed order and every error is prefixed with the stage
//! it arose in, so a failing run names the step that broke.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::corpus::{Corpus, PendingExperiment};
use crate::denoise::{
    auto_prior, fit_map, fit_mcmc, FitConfig, InferenceMethod, LatentParams, LatentParamsFile,
    McmcDiagnostics,
};
use crate::error::{Error, Result};
use crate::evalharness::{decide, Decision};
use crate::noisescale::{estimate_xi_ref, predict_xi, NoiseModel, NoiseModelFile};
use crate::portfolio::{alignment_probability, optimize_weights};

/// Pipeline knobs: the inference configuration plus where artifacts go.
#[derive(Debug, Clone, Default)]
pub struct PipelineConfig {
    pub fit: FitConfig,
}

/// Weights resolved for one pending experiment.
#[derive(Debug, Clone, Serialize)]
pub struct PendingWeights {
    pub id: String,
    pub n: u64,
    pub w: Vec<f64>,
    pub rho: f64,
    pub alignment_probability: f64,
    /// wᵀΔ̂ᴾ when proxy measurements were supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub composite_value: Option<f64>,
    /// Decision from the composite t-statistic, when measurable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
}

/// Everything the pipeline produced.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub latent: LatentParams,
    pub noise: NoiseModel,
    pub diagnostics: Option<McmcDiagnostics>,
    pub weights: Vec<PendingWeights>,
}

/// Run fit → noise → weights over a corpus and a list of pending
/// experiments.
pub fn run_pipeline(
    corpus: &Corpus,
    pending: &[PendingExperiment],
    config: &PipelineConfig,
) -> Result<PipelineOutcome> {
    let prior = auto_prior(corpus).map_err(|e| e.in_stage("fit"))?;
    let (latent, diagnostics) = match config.fit.method {
        InferenceMethod::Map => (
            fit_map(corpus, &prior, &config.fit).map_err(|e| e.in_stage("fit"))?,
            None,
        ),
        InferenceMethod::Mcmc => {
            let (params, diag) =
                fit_mcmc(corpus, &prior, &config.fit).map_err(|e| e.in_stage("fit"))?;
            (params, Some(diag))
        }
    };

    let noise = estimate_xi_ref(corpus).map_err(|e| e.in_stage("noise"))?;

    let d = corpus.dim() - 1;
    let mut weights = Vec::with_capacity(pending.len());
    for exp in pending {
        exp.validate(d).map_err(|e| e.in_stage("weights"))?;
        let predicted = predict_xi(&noise, exp.n).map_err(|e| e.in_stage("weights"))?;
        let xi_pp = predicted.view((1, 1), (d, d)).into_owned();
        let pw = optimize_weights(&latent, &xi_pp).map_err(|e| e.in_stage("weights"))?;
        let align = alignment_probability(pw.rho).map_err(|e| e.in_stage("weights"))?;

        let (composite_value, decision) = match (&exp.delta_hat_p, &exp.xi_hat_pp) {
            (Some(delta_p), Some(xi_hat_pp)) => {
                let w = DVector::from_row_slice(&pw.w);
                let value = w.dot(delta_p);
                let var = (w.transpose() * xi_hat_pp * &w)[(0, 0)];
                let dec = decide(value, var).map_err(|e| e.in_stage("weights"))?;
                (Some(value), Some(dec))
            }
            _ => (None, None),
        };

        weights.push(PendingWeights {
            id: exp.id.clone(),
            n: exp.n,
            w: pw.w,
            rho: pw.rho,
            alignment_probability: align,
            composite_value,
            decision,
        });
    }

    Ok(PipelineOutcome {
        latent,
        noise,
        diagnostics,
        weights,
    })
}

/// One row of a sample-size sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n: u64,
    pub w: Vec<f64>,
    pub rho: f64,
    pub alignment_probability: f64,
}

/// Re-optimize weights at each sample size in `ns` (evaluated in the
/// order given; pass an ascending grid to read the adaptivity off the
/// rows directly).
pub fn sweep_weights(
    latent: &LatentParams,
    noise: &NoiseModel,
    ns: &[u64],
) -> Result<Vec<SweepRow>> {
    if ns.is_empty() {
        return Err(Error::Invalid("sweep grid must be nonempty".into()));
    }
    let d = latent.num_proxies();
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let predicted = predict_xi(noise, n)?;
        let xi_pp = predicted.view((1, 1), (d, d)).into_owned();
        let pw = optimize_weights(latent, &xi_pp)?;
        rows.push(SweepRow {
            n,
            w: pw.w,
            rho: pw.rho,
            alignment_probability: alignment_probability(pw.rho)?,
        });
    }
    Ok(rows)
}

/// CSV for a sweep: `n,w_1..w_d,rho,alignment_probability`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let d = rows.first().map_or(0, |r| r.w.len());
    let mut out = String::from("n");
    for j in 1..=d {
        out.push_str(&format!(",w_{j}"));
    }
    out.push_str(",rho,alignment_probability\n");
    for row in rows {
        out.push_str(&row.n.to_string());
        for w in &row.w {
            out.push_str(&format!(",{w}"));
        }
        out.push_str(&format!(",{},{}\n", row.rho, row.alignment_probability));
    }
    out
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Invalid(format!("serialization failed: {e}")))?;
    fs::write(path, body + "\n")?;
    Ok(())
}

/// Write `latent.json`, `noise.json`, `weights.json`, and (for MCMC runs)
/// `diagnostics.json` into `output_dir`, creating it if needed.
pub fn write_outputs(outcome: &PipelineOutcome, output_dir: impl AsRef<Path>) -> Result<()> {
    let dir = output_dir.as_ref();
    fs::create_dir_all(dir)?;
    write_json(&dir.join("latent.json"), &LatentParamsFile::from(&outcome.latent))?;
    write_json(&dir.join("noise.json"), &NoiseModelFile::from(&outcome.noise))?;
    write_json(&dir.join("weights.json"), &outcome.weights)?;
    if let Some(diag) = &outcome.diagnostics {
        write_json(&dir.join("diagnostics.json"), diag)?;
    }
    Ok(())
}
