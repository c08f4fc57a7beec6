//! Data model and file format for corpora of historical A/B-test results.
//!
//! A corpus holds one record per experiment: the treatment-unit count n,
//! the estimated treatment effects on the long-term outcome and the d
//! proxy metrics (ordered `[long-term, proxy_1..proxy_d]`), and the
//! within-experiment covariance of those estimates.
//!
//! On disk a corpus is UTF-8 JSON lines: a header object
//! `{"long_term": str, "proxies": [str,...]}` followed by one record
//! object per line with the covariance stored as its row-major lower
//! triangle.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalharness::{decide, Decision};
use crate::linalg;

/// Names of the long-term outcome and the d proxy metrics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSchema {
    pub long_term_name: String,
    pub proxy_names: Vec<String>,
}

impl MetricSchema {
    pub fn new(long_term_name: impl Into<String>, proxy_names: Vec<String>) -> Result<Self> {
        let schema = MetricSchema {
            long_term_name: long_term_name.into(),
            proxy_names,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.proxy_names.is_empty() {
            return Err(Error::Invalid("schema needs at least one proxy".into()));
        }
        let mut names: HashSet<&str> = HashSet::new();
        for name in std::iter::once(self.long_term_name.as_str())
            .chain(self.proxy_names.iter().map(|s| s.as_str()))
        {
            if name.is_empty() {
                return Err(Error::Invalid("metric names must be non-empty".into()));
            }
            if !names.insert(name) {
                return Err(Error::Invalid(format!("duplicate metric name '{name}'")));
            }
        }
        Ok(())
    }

    /// Number of proxy metrics d.
    pub fn num_proxies(&self) -> usize {
        self.proxy_names.len()
    }

    /// Full dimension d+1 including the long-term outcome.
    pub fn dim(&self) -> usize {
        self.proxy_names.len() + 1
    }
}

/// One historical experiment: estimated TEs and their within-experiment
/// covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub id: String,
    pub n: u64,
    /// Estimated TEs, ordered `[long-term, proxy_1..proxy_d]`.
    pub delta_hat: DVector<f64>,
    /// Within-experiment covariance of `delta_hat`, full symmetric.
    pub xi_hat: DMatrix<f64>,
}

impl ExperimentRecord {
    pub fn new(id: impl Into<String>, n: u64, delta_hat: DVector<f64>, xi_hat: DMatrix<f64>) -> Result<Self> {
        let rec = ExperimentRecord {
            id: id.into(),
            n,
            delta_hat,
            xi_hat,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Invalid(format!("record '{}': n must be >= 1", self.id)));
        }
        let p = self.delta_hat.len();
        if self.xi_hat.nrows() != p || self.xi_hat.ncols() != p {
            return Err(Error::DimensionMismatch {
                id: self.id.clone(),
                expected: p,
                got: self.xi_hat.nrows(),
            });
        }
        if !self.delta_hat.iter().all(|v| v.is_finite())
            || !self.xi_hat.iter().all(|v| v.is_finite())
        {
            return Err(Error::Invalid(format!("record '{}': non-finite entry", self.id)));
        }
        linalg::check_psd(&self.xi_hat, &self.id)?;
        Ok(())
    }

    /// Dimension d+1 of this record.
    pub fn dim(&self) -> usize {
        self.delta_hat.len()
    }
}

/// A new experiment awaiting weights: its size is always known, its proxy
/// measurements and proxy-block noise covariance may be supplied once the
/// experiment has run.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingExperiment {
    pub id: String,
    pub n: u64,
    pub delta_hat_p: Option<DVector<f64>>,
    pub xi_hat_pp: Option<DMatrix<f64>>,
}

impl PendingExperiment {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Invalid(format!("pending '{}': n must be >= 1", self.id)));
        }
        if self.delta_hat_p.is_some() != self.xi_hat_pp.is_some() {
            return Err(Error::Invalid(format!(
                "pending '{}': delta_hat_p and xi_hat_pp must be present together",
                self.id
            )));
        }
        if let Some(dh) = &self.delta_hat_p {
            if dh.len() != d {
                return Err(Error::DimensionMismatch {
                    id: self.id.clone(),
                    expected: d,
                    got: dh.len(),
                });
            }
        }
        if let Some(xi) = &self.xi_hat_pp {
            if xi.nrows() != d {
                return Err(Error::DimensionMismatch {
                    id: self.id.clone(),
                    expected: d,
                    got: xi.nrows(),
                });
            }
            linalg::check_psd(xi, &self.id)?;
        }
        Ok(())
    }
}

/// Immutable collection of experiment records sharing one metric schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub schema: MetricSchema,
    pub records: Vec<ExperimentRecord>,
}

impl Corpus {
    pub fn new(schema: MetricSchema, records: Vec<ExperimentRecord>) -> Result<Self> {
        schema.validate()?;
        let p = schema.dim();
        let mut ids = HashSet::new();
        for rec in &records {
            rec.validate()?;
            if rec.dim() != p {
                return Err(Error::DimensionMismatch {
                    id: rec.id.clone(),
                    expected: p,
                    got: rec.dim(),
                });
            }
            if !ids.insert(rec.id.clone()) {
                return Err(Error::Invalid(format!("duplicate record id '{}'", rec.id)));
            }
        }
        Ok(Corpus { schema, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Dimension d+1.
    pub fn dim(&self) -> usize {
        self.schema.dim()
    }

    /// Sample mean of `delta_hat` across records.
    pub fn sample_mean(&self) -> DVector<f64> {
        let p = self.dim();
        let mut mean = DVector::zeros(p);
        for rec in &self.records {
            mean += &rec.delta_hat;
        }
        mean / self.len() as f64
    }

    /// Sample covariance (denominator K-1) of `delta_hat` across records.
    pub fn sample_covariance(&self) -> DMatrix<f64> {
        let p = self.dim();
        let mean = self.sample_mean();
        let mut cov = DMatrix::zeros(p, p);
        for rec in &self.records {
            let r = &rec.delta_hat - &mean;
            cov += &r * r.transpose();
        }
        cov / (self.len() as f64 - 1.0).max(1.0)
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    long_term: String,
    proxies: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    n: u64,
    delta_hat: Vec<f64>,
    xi_hat_lower: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PendingLine {
    id: String,
    n: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_hat_p: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    xi_hat_pp_lower: Option<Vec<f64>>,
}

fn parse_header(line: &str) -> Result<MetricSchema> {
    let header: HeaderLine = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    MetricSchema::new(header.long_term, header.proxies)
}

/// Load and fully validate a corpus from a JSON-lines file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let file = File::open(path.as_ref())?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file: missing header".into(),
    })??;
    let schema = parse_header(&header_line)?;
    let p = schema.dim();
    let tri = linalg::tri_len(p);

    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RecordLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if raw.delta_hat.len() != p {
            return Err(Error::DimensionMismatch {
                id: raw.id,
                expected: p,
                got: raw.delta_hat.len(),
            });
        }
        if raw.xi_hat_lower.len() != tri {
            return Err(Error::DimensionMismatch {
                id: raw.id,
                expected: tri,
                got: raw.xi_hat_lower.len(),
            });
        }
        let xi_hat = linalg::unpack_lower(&raw.xi_hat_lower, p);
        records.push(ExperimentRecord::new(
            raw.id,
            raw.n,
            DVector::from_vec(raw.delta_hat),
            xi_hat,
        )?);
    }
    Corpus::new(schema, records)
}

/// Write a corpus in the JSON-lines format read by [`load_corpus`].
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    let header = HeaderLine {
        long_term: corpus.schema.long_term_name.clone(),
        proxies: corpus.schema.proxy_names.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for rec in &corpus.records {
        let line = RecordLine {
            id: rec.id.clone(),
            n: rec.n,
            delta_hat: rec.delta_hat.iter().copied().collect(),
            xi_hat_lower: linalg::pack_lower(&rec.xi_hat),
        };
        writeln!(w, "{}", serde_json::to_string(&line).expect("record serializes"))?;
    }
    w.flush()?;
    Ok(())
}

/// Load pending experiments: same header as a corpus file, records carry
/// only `n` plus optional proxy measurements.
pub fn load_pending(path: impl AsRef<Path>) -> Result<(MetricSchema, Vec<PendingExperiment>)> {
    let file = File::open(path.as_ref())?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file: missing header".into(),
    })??;
    let schema = parse_header(&header_line)?;
    let d = schema.num_proxies();

    let mut pending = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: PendingLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let xi_hat_pp = match raw.xi_hat_pp_lower {
            Some(tri) => {
                if tri.len() != linalg::tri_len(d) {
                    return Err(Error::DimensionMismatch {
                        id: raw.id,
                        expected: linalg::tri_len(d),
                        got: tri.len(),
                    });
                }
                Some(linalg::unpack_lower(&tri, d))
            }
            None => None,
        };
        let exp = PendingExperiment {
            id: raw.id,
            n: raw.n,
            delta_hat_p: raw.delta_hat_p.map(DVector::from_vec),
            xi_hat_pp,
        };
        exp.validate(d)?;
        pending.push(exp);
    }
    Ok((schema, pending))
}

fn long_term_decision(rec: &ExperimentRecord) -> Decision {
    let var = rec.xi_hat[(0, 0)];
    if var > 0.0 {
        decide(rec.delta_hat[0], var).expect("positive variance")
    } else {
        // zero long-term noise: fall back to the sign of the estimate
        match rec.delta_hat[0].partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => Decision::Positive,
            Some(std::cmp::Ordering::Less) => Decision::Negative,
            _ => Decision::Neutral,
        }
    }
}

/// Stratified k-fold split: strata are the three-way long-term decision
/// classes, shuffled within stratum and dealt cyclically so each
/// stratum's records spread across folds as evenly as counts allow.
/// Deterministic given `seed`.
pub fn stratified_kfold(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<(Corpus, Corpus)>> {
    if k < 2 {
        return Err(Error::Invalid("k must be >= 2".into()));
    }
    if k > corpus.len() {
        return Err(Error::Invalid(format!(
            "k = {} exceeds corpus size {}",
            k,
            corpus.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (i, rec) in corpus.records.iter().enumerate() {
        let s = match long_term_decision(rec) {
            Decision::Positive => 0,
            Decision::Neutral => 1,
            Decision::Negative => 2,
        };
        strata[s].push(i);
    }

    // single cursor over the concatenated shuffled strata keeps both the
    // per-stratum counts and the total fold sizes within one of each other
    let mut fold_of = vec![0usize; corpus.len()];
    let mut cursor = 0usize;
    for stratum in &mut strata {
        stratum.shuffle(&mut rng);
        for &idx in stratum.iter() {
            fold_of[idx] = cursor % k;
            cursor += 1;
        }
    }

    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, rec) in corpus.records.iter().enumerate() {
            if fold_of[i] == f {
                test.push(rec.clone());
            } else {
                train.push(rec.clone());
            }
        }
        folds.push((
            Corpus::new(corpus.schema.clone(), train)?,
            Corpus::new(corpus.schema.clone(), test)?,
        ));
    }
    Ok(folds)
}
