//! Decision rules, contingency tables, and the cross-validated
//! comparison protocol for proxy weighting strategies.
//!
//! A treatment effect drives a three-way decision by thresholding its
//! t-statistic at ±2. Tabulating the proxy decision against the
//! long-term decision over a corpus gives a 3x3 contingency table from
//! which the two headline criteria are read off:
//!
//! ```text
//! proxy score = (detections − mistakes) / #(long-term significant)
//! sensitivity = #(proxy significant) / #(total)
//! ```
//!
//! `cv_evaluate` runs the stratified k-fold protocol: weights and noise
//! models are fitted on the training fold only, the adaptive strategy
//! refits per test record from its sample size alone, and decisions are
//! pooled across test folds.

use nalgebra::DVector;
use serde::Serialize;

use crate::corpus::{stratified_kfold, Corpus, ExperimentRecord};
use crate::denoise::{auto_prior, fit_map, FitConfig, InferenceMethod};
use crate::error::{Error, Result};
use crate::noisescale::{estimate_xi_ref, predict_xi};
use crate::portfolio::{composite_quality, optimize_weights};

/// Three-way decision from a thresholded t-statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decision {
    Positive,
    Neutral,
    Negative,
}

impl Decision {
    fn index(self) -> usize {
        match self {
            Decision::Positive => 0,
            Decision::Neutral => 1,
            Decision::Negative => 2,
        }
    }
}

/// tstat = delta_hat/√var_hat; Positive if tstat > 2, Negative if
/// tstat < −2, Neutral otherwise (boundary |tstat| = 2 is Neutral).
pub fn decide(delta_hat: f64, var_hat: f64) -> Result<Decision> {
    if var_hat <= 0.0 {
        return Err(Error::Invalid("var_hat must be positive".into()));
    }
    let tstat = delta_hat / var_hat.sqrt();
    Ok(if tstat > 2.0 {
        Decision::Positive
    } else if tstat < -2.0 {
        Decision::Negative
    } else {
        Decision::Neutral
    })
}

/// Decision induced by the composite proxy wᵀΔ̂ᴾ, with variance wᵀΞ̂ᴾᴾw
/// from the record's own covariance.
pub fn composite_decision(record: &ExperimentRecord, w: &DVector<f64>) -> Result<Decision> {
    let d = record.dim() - 1;
    if w.len() != d {
        return Err(Error::DimensionMismatch {
            id: record.id.clone(),
            expected: d,
            got: w.len(),
        });
    }
    let delta_p = record.delta_hat.rows(1, d);
    let xi_pp = record.xi_hat.view((1, 1), (d, d));
    let value = w.dot(&delta_p.into_owned());
    let var = (w.transpose() * xi_pp * w)[(0, 0)];
    decide(value, var)
}

/// 3x3 decision-alignment counts, indexed (proxy decision, long-term
/// decision) with rows/columns ordered Positive, Neutral, Negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ContingencyTable {
    pub counts: [[u64; 3]; 3],
}

impl ContingencyTable {
    pub fn record(&mut self, proxy: Decision, long_term: Decision) {
        self.counts[proxy.index()][long_term.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Tabulate composite-proxy decisions against long-term decisions over a
/// corpus.
pub fn contingency(corpus: &Corpus, w: &DVector<f64>) -> Result<ContingencyTable> {
    if corpus.is_empty() {
        return Err(Error::Invalid("cannot tabulate an empty corpus".into()));
    }
    let mut table = ContingencyTable::default();
    for rec in &corpus.records {
        let proxy = composite_decision(rec, w)?;
        let long_term = decide(rec.delta_hat[0], rec.xi_hat[(0, 0)])?;
        table.record(proxy, long_term);
    }
    Ok(table)
}

/// (detections − mistakes) / #(long-term significant). Detections are the
/// aligned significant cells (+,+) and (−,−); mistakes the misaligned
/// ones (+,−) and (−,+).
pub fn proxy_score(t: &ContingencyTable) -> Result<f64> {
    let detections = t.counts[0][0] + t.counts[2][2];
    let mistakes = t.counts[0][2] + t.counts[2][0];
    let denom: u64 = (0..3).map(|row| t.counts[row][0] + t.counts[row][2]).sum();
    if denom == 0 {
        return Err(Error::Invalid(
            "proxy score undefined: no long-term-significant experiments".into(),
        ));
    }
    Ok((detections as f64 - mistakes as f64) / denom as f64)
}

/// Fraction of experiments where the proxy decision is significant
/// (top row + bottom row over the total).
pub fn sensitivity(t: &ContingencyTable) -> Result<f64> {
    let total = t.total();
    if total == 0 {
        return Err(Error::Invalid("sensitivity undefined on an empty table".into()));
    }
    let significant: u64 = t.counts[0].iter().sum::<u64>() + t.counts[2].iter().sum::<u64>();
    Ok(significant as f64 / total as f64)
}

/// A weighting strategy the CV harness can score.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightStrategy {
    /// Refit weights per test record from its sample size via the
    /// train-fold latent and noise models.
    AdaptiveComposite,
    /// Fixed single proxy w = e_j (0-based proxy index).
    SingleProxy(usize),
    /// Externally supplied fixed weights (e.g. a baseline method).
    Fixed { name: String, w: Vec<f64> },
}

impl WeightStrategy {
    pub fn name(&self, corpus: &Corpus) -> String {
        match self {
            WeightStrategy::AdaptiveComposite => "adaptive_composite".into(),
            WeightStrategy::SingleProxy(j) => corpus.schema.proxy_names[*j].clone(),
            WeightStrategy::Fixed { name, .. } => name.clone(),
        }
    }
}

/// One scored method row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub sensitivity: f64,
    pub proxy_score: f64,
    pub proxy_quality: f64,
    #[serde(skip)]
    pub table: ContingencyTable,
}

/// Per-method evaluation rows in the order the strategies were given.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub rows: Vec<MethodReport>,
}

impl EvalReport {
    /// CSV with columns `method,sensitivity,proxy_score,proxy_quality`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,sensitivity,proxy_score,proxy_quality\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.method, row.sensitivity, row.proxy_score, row.proxy_quality
            ));
        }
        out
    }

    /// Fixed-width table for standard output.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<24} {:>12} {:>12} {:>14}\n",
            "method", "sensitivity", "proxy_score", "proxy_quality"
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{:<24} {:>12.4} {:>12.4} {:>14.4}\n",
                row.method, row.sensitivity, row.proxy_score, row.proxy_quality
            ));
        }
        out
    }
}

/// Stratified k-fold comparison of weighting strategies.
///
/// For each fold the latent parameters and the noise model are fitted on
/// the training records only. Each test record's proxy-block noise is
/// predicted from its sample size; the adaptive strategy re-optimizes
/// weights at that noise level while fixed strategies keep their weights.
/// Decisions are pooled across test folds into one contingency table per
/// method, and proxy quality is the mean per-record ρ over test records.
pub fn cv_evaluate(
    corpus: &Corpus,
    k: usize,
    methods: &[WeightStrategy],
    seed: u64,
    config: &FitConfig,
) -> Result<EvalReport> {
    if methods.is_empty() {
        return Err(Error::Invalid("methods list must be nonempty".into()));
    }
    let d = corpus.dim() - 1;
    for method in methods {
        match method {
            WeightStrategy::SingleProxy(j) if *j >= d => {
                return Err(Error::Invalid(format!("proxy index {j} out of range")));
            }
            WeightStrategy::Fixed { name, w } if w.len() != d => {
                return Err(Error::Invalid(format!(
                    "fixed method '{name}' has {} weights, expected {d}",
                    w.len()
                )));
            }
            _ => {}
        }
    }

    let folds = stratified_kfold(corpus, k, seed)?;
    let mut tables = vec![ContingencyTable::default(); methods.len()];
    let mut quality_sums = vec![0.0f64; methods.len()];
    let mut scored = 0usize;

    for (fold_idx, (train, test)) in folds.iter().enumerate() {
        let mut fold_config = config.clone();
        fold_config.seed = config.seed.wrapping_add(fold_idx as u64);
        let prior = auto_prior(train)?;
        let latent = fit_map(train, &prior, &fold_config)
            .map_err(|e| e.in_stage("cv train fit"))?;
        let noise = estimate_xi_ref(train).map_err(|e| e.in_stage("cv noise fit"))?;

        for rec in &test.records {
            let predicted = predict_xi(&noise, rec.n)?;
            let xi_pp = predicted.view((1, 1), (d, d)).into_owned();
            let long_term = decide(rec.delta_hat[0], rec.xi_hat[(0, 0)])?;
            scored += 1;
            for (m, method) in methods.iter().enumerate() {
                let w = match method {
                    WeightStrategy::AdaptiveComposite => {
                        DVector::from_vec(optimize_weights(&latent, &xi_pp)?.w)
                    }
                    WeightStrategy::SingleProxy(j) => {
                        let mut w = DVector::zeros(d);
                        w[*j] = 1.0;
                        w
                    }
                    WeightStrategy::Fixed { w, .. } => DVector::from_vec(w.clone()),
                };
                tables[m].record(composite_decision(rec, &w)?, long_term);
                quality_sums[m] += composite_quality(&w, &latent, &xi_pp)?;
            }
        }
    }

    let rows = methods
        .iter()
        .enumerate()
        .map(|(m, method)| {
            Ok(MethodReport {
                method: method.name(corpus),
                sensitivity: sensitivity(&tables[m])?,
                proxy_score: proxy_score(&tables[m])?,
                proxy_quality: quality_sums[m] / scored as f64,
                table: tables[m],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { rows })
}

/// Convenience: the adaptive composite plus every single-proxy baseline,
/// the standard method list for a Table-1-style comparison.
pub fn default_methods(corpus: &Corpus) -> Vec<WeightStrategy> {
    let mut methods = vec![WeightStrategy::AdaptiveComposite];
    for j in 0..corpus.dim() - 1 {
        methods.push(WeightStrategy::SingleProxy(j));
    }
    methods
}

/// Default CV fit configuration (MAP path).
pub fn default_cv_config(seed: u64) -> FitConfig {
    FitConfig {
        method: InferenceMethod::Map,
        seed,
        ..FitConfig::default()
    }
}
