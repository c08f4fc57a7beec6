//! Sample-size-adaptive composite proxy metrics for A/B testing.
//!
//! Online experiments read out long-term outcomes only noisily, so teams
//! lean on short-term proxy metrics. This crate treats a corpus of
//! historical experiments as draws from a two-level Gaussian model
//!
//! ```text
//! Δᵢ  ~ MVN(μ, Λ)          latent treatment effects
//! Δ̂ᵢ | Δᵢ ~ MVN(Δᵢ, Ξᵢ)    measurement noise, Ξᵢ ≈ Ξ_ref / nᵢ
//! ```
//!
//! and builds, for any upcoming experiment of size n, the convex
//! combination of proxies most correlated with the latent long-term
//! effect at that noise level. The pieces:
//!
//! - [`corpus`]: the JSON-lines corpus format, validation, stratified
//!   k-fold splitting.
//! - [`synthgen`]: seeded synthetic corpora with known ground truth.
//! - [`denoise`]: MAP and MCMC recovery of (μ, Λ) from the noisy corpus.
//! - [`portfolio`]: proxy quality ρ and the Sharpe-ratio weight QP.
//! - [`noisescale`]: the Ξ_ref/n noise model and its power-law diagnostic.
//! - [`evalharness`]: decision rules, contingency tables, and
//!   cross-validated strategy comparison.
//! - [`pipeline`]: end-to-end orchestration with artifacts on disk.

pub mod corpus;
pub mod denoise;
pub mod error;
pub mod evalharness;
pub mod linalg;
pub mod noisescale;
pub mod pipeline;
pub mod portfolio;
pub mod synthgen;

pub use error::{Error, Result};
