//! Randomized property suites: analytic gradients against central
//! differences, bounds and monotonicity of the proxy quality, simplex
//! validity of optimized weights, permutation invariance of the
//! likelihood, and end-to-end determinism.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use composite_proxy::corpus::{Corpus, ExperimentRecord, MetricSchema};
use composite_proxy::denoise::{
    log_posterior_and_grad, marginal_log_likelihood, theta_len, LatentParams, PriorSpec,
};
use composite_proxy::portfolio::{composite_quality, optimize_weights, solve_qp, QPProblem};
use composite_proxy::synthgen::{generate, GenSpec, NoiseSpec};

const CASES: u32 = 100;

fn schema(d: usize) -> MetricSchema {
    MetricSchema::new("long_term", (1..=d).map(|j| format!("proxy_{j}")).collect()).unwrap()
}

/// Well-conditioned random SPD matrix from raw entries in [-1, 1].
fn spd_from(raw: &[f64], p: usize, ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |i, j| raw[i * p + j]);
    &a * a.transpose() + DMatrix::identity(p, p) * ridge
}

fn simplex_from(raw: &[f64]) -> DVector<f64> {
    let exps: Vec<f64> = raw.iter().map(|v| v.exp()).collect();
    let total: f64 = exps.iter().sum();
    DVector::from_iterator(raw.len(), exps.iter().map(|e| e / total))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    // analytic posterior gradient vs central differences
    #[test]
    fn posterior_gradient_matches_central_differences(
        d in 1usize..=3,
        raw_xi in prop::collection::vec(-1.0f64..1.0, 3 * 16),
        raw_delta in prop::collection::vec(-2.0f64..2.0, 3 * 4),
        raw_theta in prop::collection::vec(-1.2f64..1.2, 14),
    ) {
        let p = d + 1;
        let records: Vec<ExperimentRecord> = (0..3)
            .map(|i| {
                let xi = spd_from(&raw_xi[i * 16..i * 16 + p * p], p, 0.5);
                let delta = DVector::from_iterator(p, raw_delta[i * 4..i * 4 + p].iter().copied());
                ExperimentRecord::new(format!("e{i}"), 100, delta, xi).unwrap()
            })
            .collect();
        let corpus = Corpus::new(schema(d), records).unwrap();
        let prior = PriorSpec::new(
            DVector::from_element(p, 1.0),
            DVector::from_element(p, 1.0),
        )
        .unwrap();
        let theta = DVector::from_iterator(theta_len(p), raw_theta.iter().copied().take(theta_len(p)));

        let (_, grad) = log_posterior_and_grad(&theta, &prior, &corpus).unwrap();
        for k in 0..theta.len() {
            let h = 1e-6 * theta[k].abs().max(1.0);
            let mut plus = theta.clone();
            plus[k] += h;
            let mut minus = theta.clone();
            minus[k] -= h;
            let (vp, _) = log_posterior_and_grad(&plus, &prior, &corpus).unwrap();
            let (vm, _) = log_posterior_and_grad(&minus, &prior, &corpus).unwrap();
            let fd = (vp - vm) / (2.0 * h);
            let denom = fd.abs().max(grad[k].abs()).max(1e-3);
            prop_assert!(
                (fd - grad[k]).abs() / denom < 1e-5,
                "coordinate {}: analytic {} vs fd {}",
                k, grad[k], fd
            );
        }
    }

    // composite quality is a correlation: always in [-1, 1]
    #[test]
    fn composite_quality_bounded(
        d in 1usize..=4,
        raw_lambda in prop::collection::vec(-1.0f64..1.0, 25),
        raw_xi in prop::collection::vec(-1.0f64..1.0, 16),
        raw_w in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let p = d + 1;
        let lambda = spd_from(&raw_lambda[..p * p], p, 0.05);
        let xi = spd_from(&raw_xi[..d * d], d, 0.0);
        let latent = LatentParams { mu: DVector::zeros(p), lambda };
        let w = simplex_from(&raw_w[..d]);
        let rho = composite_quality(&w, &latent, &xi).unwrap();
        prop_assert!(rho.abs() <= 1.0 + 1e-12, "rho = {rho}");
    }

    // adding noise can only shrink the quality in magnitude
    #[test]
    fn more_noise_never_helps(
        d in 1usize..=4,
        raw_lambda in prop::collection::vec(-1.0f64..1.0, 25),
        raw_xi in prop::collection::vec(-1.0f64..1.0, 16),
        raw_extra in prop::collection::vec(-1.0f64..1.0, 16),
        raw_w in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let p = d + 1;
        let lambda = spd_from(&raw_lambda[..p * p], p, 0.05);
        let xi = spd_from(&raw_xi[..d * d], d, 0.0);
        let extra = spd_from(&raw_extra[..d * d], d, 0.0);
        let latent = LatentParams { mu: DVector::zeros(p), lambda };
        let w = simplex_from(&raw_w[..d]);
        let base = composite_quality(&w, &latent, &xi).unwrap();
        let noisier = composite_quality(&w, &latent, &(&xi + &extra)).unwrap();
        prop_assert!(
            noisier.abs() <= base.abs() + 1e-12,
            "|rho| rose from {base} to {noisier}"
        );
    }

    // optimized weights live on the simplex
    #[test]
    fn optimized_weights_on_simplex(
        d in 1usize..=5,
        raw_lambda in prop::collection::vec(-1.0f64..1.0, 36),
        raw_xi in prop::collection::vec(-1.0f64..1.0, 25),
    ) {
        let p = d + 1;
        let mut lambda = spd_from(&raw_lambda[..p * p], p, 0.05);
        // ensure at least one positively correlated proxy
        if !(1..p).any(|j| lambda[(0, j)] > 0.0) {
            let v = lambda[(0, 1)].abs().max(0.01);
            lambda[(0, 1)] = v;
            lambda[(1, 0)] = v;
        }
        let xi = spd_from(&raw_xi[..d * d], d, 0.01);
        let latent = LatentParams { mu: DVector::zeros(p), lambda };
        let weights = optimize_weights(&latent, &xi).unwrap();
        let total: f64 = weights.w.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "sum = {total}");
        prop_assert!(weights.w.iter().all(|&wi| (0.0..=1.0 + 1e-12).contains(&wi)));
        prop_assert!(weights.rho.abs() <= 1.0 + 1e-12);
    }

    // the likelihood is invariant under record permutation
    #[test]
    fn likelihood_permutation_invariant(
        d in 1usize..=3,
        k in 2usize..=8,
        raw_xi in prop::collection::vec(-1.0f64..1.0, 8 * 16),
        raw_delta in prop::collection::vec(-2.0f64..2.0, 8 * 4),
        raw_lambda in prop::collection::vec(-1.0f64..1.0, 16),
        perm_seed in 0u64..1000,
    ) {
        let p = d + 1;
        let records: Vec<ExperimentRecord> = (0..k)
            .map(|i| {
                // duplicate covariances across records to exercise grouping
                let src = (i / 2) * 16;
                let xi = spd_from(&raw_xi[src..src + p * p], p, 0.3);
                let delta = DVector::from_iterator(p, raw_delta[i * 4..i * 4 + p].iter().copied());
                ExperimentRecord::new(format!("e{i}"), 100, delta, xi).unwrap()
            })
            .collect();
        let mut shuffled = records.clone();
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));

        let params = LatentParams {
            mu: DVector::zeros(p),
            lambda: spd_from(&raw_lambda[..p * p], p, 0.05),
        };
        let a = marginal_log_likelihood(&params, &Corpus::new(schema(d), records).unwrap()).unwrap();
        let b = marginal_log_likelihood(&params, &Corpus::new(schema(d), shuffled).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    // same seed, same corpus; same QP, same solution
    #[test]
    fn generation_and_solver_deterministic(
        seed in 0u64..10_000,
        raw_lambda in prop::collection::vec(-1.0f64..1.0, 9),
        raw_xi in prop::collection::vec(-1.0f64..1.0, 9),
        raw_r in prop::collection::vec(0.01f64..1.0, 3),
    ) {
        let spec = GenSpec {
            mu: DVector::zeros(3),
            lambda: spd_from(&raw_lambda, 3, 0.05),
            noise: NoiseSpec::Explicit(vec![spd_from(&raw_xi, 3, 0.1); 12]),
            count: 12,
            seed,
        };
        let (corpus_a, latents_a) = generate(&spec).unwrap();
        let (corpus_b, latents_b) = generate(&spec).unwrap();
        prop_assert_eq!(corpus_a, corpus_b);
        prop_assert_eq!(latents_a, latents_b);

        let problem = QPProblem {
            sigma: spd_from(&raw_xi, 3, 0.1),
            r: DVector::from_iterator(3, raw_r.iter().copied()),
        };
        let (xa, nua) = solve_qp(&problem).unwrap();
        let (xb, nub) = solve_qp(&problem).unwrap();
        prop_assert_eq!(xa, xb);
        prop_assert_eq!(nua.to_bits(), nub.to_bits());
    }
}
