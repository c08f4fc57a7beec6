//! Acceptance gate: nine end-to-end criteria with explicit tolerances
//! and runtime bounds. Each criterion prints one PASS/FAIL line; the
//! test fails if any criterion does (run with `--nocapture` to stream
//! the lines).

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use composite_proxy::corpus::{Corpus, ExperimentRecord, MetricSchema};
use composite_proxy::denoise::{
    auto_prior, fit_map, fit_mcmc, log_posterior_and_grad, marginal_log_likelihood,
    moment_estimator, theta_len, FitConfig, LatentParams, PriorSpec,
};
use composite_proxy::evalharness::{cv_evaluate, default_cv_config, default_methods};
use composite_proxy::noisescale::{estimate_xi_ref, fit_power_law, NoiseModel};
use composite_proxy::pipeline::sweep_weights;
use composite_proxy::portfolio::{
    alignment_probability, composite_quality, grid_best_quality, optimize_weights, solve_qp,
    QPProblem,
};
use composite_proxy::synthgen::{generate, sample_mvn, GenSpec, NoiseSpec};

fn assert_within(elapsed: Duration, bound: Duration, what: &str) {
    assert!(
        elapsed <= bound,
        "{what} took {elapsed:?}, bound {bound:?}"
    );
}

fn fig2_lambda() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]) * 0.01
}

fn fig2_xi() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.7, 1.0]) * 0.02
}

/// Denoising recovery on the two-level model at K = 1500, d = 1.
fn criterion_1_denoising_recovery() {
    let start = Instant::now();
    let lambda = fig2_lambda();
    let spec = GenSpec {
        mu: DVector::zeros(2),
        lambda: lambda.clone(),
        noise: NoiseSpec::Explicit(vec![fig2_xi(); 1500]),
        count: 1500,
        seed: 20260823,
    };
    let (corpus, _) = generate(&spec).unwrap();
    let prior = auto_prior(&corpus).unwrap();
    let fitted = fit_map(&corpus, &prior, &FitConfig::default()).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let err = (fitted.lambda[(i, j)] - lambda[(i, j)]).abs();
            assert!(
                err <= 0.004,
                "lambda[({i},{j})] = {} (error {err:.5})",
                fitted.lambda[(i, j)]
            );
        }
    }
    let corr = fitted.lambda[(0, 1)] / (fitted.lambda[(0, 0)] * fitted.lambda[(1, 1)]).sqrt();
    assert!((corr - 0.2).abs() <= 0.1, "latent correlation {corr}");
    assert_within(start.elapsed(), Duration::from_secs(60), "denoising recovery");
}

/// Optimizer matches or beats an exhaustive 0.01-step simplex grid on 100
/// random instances.
fn criterion_2_qp_vs_grid() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..100 {
        let d = if case % 2 == 0 { 2 } else { 3 };
        let p = d + 1;
        let a = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0f64..1.0));
        let mut lambda = &a * a.transpose() + DMatrix::identity(p, p) * 0.05;
        if !(1..p).any(|j| lambda[(0, j)] > 0.0) {
            let v = lambda[(0, 1)].abs().max(0.01);
            lambda[(0, 1)] = v;
            lambda[(1, 0)] = v;
        }
        let b = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-0.5f64..0.5));
        let xi = &b * b.transpose();
        let latent = LatentParams {
            mu: DVector::zeros(p),
            lambda,
        };
        let weights = optimize_weights(&latent, &xi).unwrap();
        let (_, grid_rho) = grid_best_quality(&latent, &xi, 0.01).unwrap();
        assert!(
            weights.rho >= grid_rho - 1e-9,
            "case {case}: rho {} below grid maximum {grid_rho}",
            weights.rho
        );
    }
    assert_within(start.elapsed(), Duration::from_secs(30), "QP vs grid");
}

/// Closed-form KKT case: Σ = diag(1,4), r = (1,1) gives w = (0.8, 0.2).
fn criterion_3_closed_form_qp() {
    let problem = QPProblem {
        sigma: DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 4.0])),
        r: DVector::from_row_slice(&[1.0, 1.0]),
    };
    let (x, _) = solve_qp(&problem).unwrap();
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    let w = x / l1;
    assert!((w[0] - 0.8).abs() <= 1e-8, "w0 = {}", w[0]);
    assert!((w[1] - 0.2).abs() <= 1e-8, "w1 = {}", w[1]);
}

/// Closed-form alignment probability vs Monte-Carlo quadrant counts.
fn criterion_4_alignment_probability() {
    assert!((alignment_probability(0.0).unwrap() - 0.25).abs() <= 1e-12);
    assert!((alignment_probability(1.0).unwrap() - 0.5).abs() <= 1e-12);

    let n = 1_000_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for &rho in &[-0.9, -0.5, 0.0, 0.3, 0.5, 0.9] {
        let p = alignment_probability(rho).unwrap();
        let mut hits = 0u64;
        let t = (1.0 - rho * rho as f64).sqrt();
        for _ in 0..n {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let y = rho * z1 + t * z2;
            if z1 > 0.0 && y > 0.0 {
                hits += 1;
            }
        }
        let p_hat = hits as f64 / n as f64;
        let tol = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (p_hat - p).abs() <= tol,
            "rho {rho}: mc {p_hat} vs closed form {p} (tol {tol})"
        );
    }
}

/// MAP, MCMC posterior mean, and the sample-splitting moment estimator
/// agree pairwise within 3x the moment estimator's seed-to-seed SD.
fn criterion_5_estimator_triangle() {
    let start = Instant::now();
    let lambda = fig2_lambda();
    let xi = fig2_xi();
    let k = 20_000usize;

    // split-sample data: two independent noisy views of each latent
    let paired_draws = |seed: u64| -> Vec<(DVector<f64>, DVector<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k)
            .map(|_| {
                let latent = sample_mvn(&DVector::zeros(2), &lambda, &mut rng).unwrap();
                let a = sample_mvn(&latent, &xi, &mut rng).unwrap();
                let b = sample_mvn(&latent, &xi, &mut rng).unwrap();
                (a, b)
            })
            .collect()
    };

    // seed-to-seed SD of the moment estimator, entrywise
    let mut entries: Vec<Vec<f64>> = vec![Vec::new(); 4];
    for seed in 0..20 {
        let (_, lam) = moment_estimator(&paired_draws(seed)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                entries[i * 2 + j].push(lam[(i, j)]);
            }
        }
    }
    let sd = DMatrix::from_fn(2, 2, |i, j| {
        let vals = &entries[i * 2 + j];
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
    });

    // the three estimators run on the same pinned draws: the corpus
    // records average the two splits (noise Ξ/2, still homoscedastic)
    let pinned = paired_draws(0);
    let (_, lam_moment) = moment_estimator(&pinned).unwrap();
    let schema = MetricSchema::new("long_term", vec!["proxy_1".into()]).unwrap();
    let half_xi = &xi * 0.5;
    let records: Vec<ExperimentRecord> = pinned
        .iter()
        .enumerate()
        .map(|(i, (a, b))| {
            ExperimentRecord::new(format!("syn-{i:06}"), 1, (a + b) * 0.5, half_xi.clone())
                .unwrap()
        })
        .collect();
    let corpus = Corpus::new(schema, records).unwrap();
    let prior = auto_prior(&corpus).unwrap();

    let config = FitConfig {
        mcmc_chains: 4,
        mcmc_warmup: 2000,
        mcmc_samples: 5000,
        seed: 5,
        ..FitConfig::default()
    };
    let lam_map = fit_map(&corpus, &prior, &config).unwrap().lambda;
    let (posterior, diag) = fit_mcmc(&corpus, &prior, &config).unwrap();
    for pd in &diag.params {
        assert!(pd.rhat <= 1.01, "{}: r-hat {}", pd.name, pd.rhat);
    }
    let lam_mcmc = posterior.lambda;

    let pairs = [
        ("map/mcmc", &lam_map, &lam_mcmc),
        ("map/moment", &lam_map, &lam_moment),
        ("mcmc/moment", &lam_mcmc, &lam_moment),
    ];
    for (name, a, b) in pairs {
        for i in 0..2 {
            for j in 0..2 {
                let tol = 3.0 * sd[(i, j)];
                assert!(
                    (a[(i, j)] - b[(i, j)]).abs() <= tol,
                    "{name} entry ({i},{j}): {} vs {} (tol {tol:.2e})",
                    a[(i, j)],
                    b[(i, j)]
                );
            }
        }
    }
    assert_within(start.elapsed(), Duration::from_secs(600), "estimator triangle");
}

/// Adaptivity: weight shifts from the robust proxy to the well-aligned
/// noisy proxy as the sample size grows.
fn criterion_6_adaptivity_sweep() {
    let start = Instant::now();
    // proxy 1: latent correlation 0.8, reference noise 10x proxy 2's;
    // proxy 2: latent correlation 0.4
    let lambda = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0, 0.8, 0.4, //
            0.8, 1.0, 0.32, //
            0.4, 0.32, 1.0,
        ],
    );
    let latent = LatentParams {
        mu: DVector::zeros(3),
        lambda,
    };
    let noise = NoiseModel {
        xi_ref: DMatrix::from_diagonal(&DVector::from_row_slice(&[1e6, 1e6, 1e5])),
        source_count: 1,
    };
    let ns = [10_000, 100_000, 1_000_000, 10_000_000, 100_000_000];
    let rows = sweep_weights(&latent, &noise, &ns).unwrap();
    for pair in rows.windows(2) {
        assert!(
            pair[1].w[0] > pair[0].w[0],
            "w1 not strictly increasing: {} -> {} at n={}",
            pair[0].w[0],
            pair[1].w[0],
            pair[1].n
        );
        assert!(
            pair[1].rho >= pair[0].rho,
            "rho fell: {} -> {} at n={}",
            pair[0].rho,
            pair[1].rho,
            pair[1].n
        );
    }
    assert_within(start.elapsed(), Duration::from_secs(5), "adaptivity sweep");
}

/// Noise-model diagnostics on a jittered scaling-mode corpus.
fn criterion_7_noise_diagnostics() {
    let start = Instant::now();
    let xi_ref = DMatrix::from_row_slice(2, 2, &[4.0, 0.8, 0.8, 2.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let schema = MetricSchema::new("long_term", vec!["proxy_1".into()]).unwrap();
    let records: Vec<ExperimentRecord> = (0..300)
        .map(|i| {
            let log_n = rng.gen_range(4.0f64..8.0) * std::f64::consts::LN_10;
            let n = log_n.exp() as u64;
            // 20% lognormal jitter on the whole matrix
            let jitter = (0.2 * rng.sample::<f64, _>(StandardNormal)).exp();
            ExperimentRecord::new(
                format!("e{i}"),
                n,
                DVector::zeros(2),
                &xi_ref * (jitter / n as f64),
            )
            .unwrap()
        })
        .collect();
    let corpus = Corpus::new(schema, records).unwrap();

    let fit = fit_power_law(&corpus, 0).unwrap();
    assert!(
        (-1.05..=-0.95).contains(&fit.exponent),
        "exponent {}",
        fit.exponent
    );
    let model = estimate_xi_ref(&corpus).unwrap();
    let rel = (&model.xi_ref - &xi_ref).norm() / xi_ref.norm();
    assert!(rel <= 0.05, "xi_ref relative Frobenius error {rel}");
    assert_within(start.elapsed(), Duration::from_secs(5), "noise diagnostics");
}

/// Cross-validated ordering: the adaptive composite ranks first on proxy
/// quality and at least tied-first on proxy score against single proxies.
fn criterion_8_cv_ordering() {
    let start = Instant::now();
    // proxy 1 aligned (latent corr 0.8) but 10x noisier; proxy 2 sensitive
    // (low noise) but weakly aligned (latent corr 0.3)
    let lambda = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0, 0.8, 0.3, //
            0.8, 1.0, 0.24, //
            0.3, 0.24, 1.0,
        ],
    ) * 0.01;
    let xi_ref = DMatrix::from_diagonal(&DVector::from_row_slice(&[2.5, 25.0, 2.5]));

    for seed in 0..5u64 {
        let mut size_rng = ChaCha8Rng::seed_from_u64(800 + seed);
        let sizes: Vec<u64> = (0..300)
            .map(|_| {
                let log_n = size_rng.gen_range(3.0f64..4.3) * std::f64::consts::LN_10;
                log_n.exp() as u64
            })
            .collect();
        let spec = GenSpec {
            mu: DVector::zeros(3),
            lambda: lambda.clone(),
            noise: NoiseSpec::Scaled {
                xi_ref: xi_ref.clone(),
                sizes,
            },
            count: 300,
            seed: 900 + seed,
        };
        let (corpus, _) = generate(&spec).unwrap();
        let methods = default_methods(&corpus);
        let report =
            cv_evaluate(&corpus, 4, &methods, seed, &default_cv_config(seed)).unwrap();
        let adaptive = &report.rows[0];
        assert_eq!(adaptive.method, "adaptive_composite");
        for row in &report.rows[1..] {
            assert!(
                adaptive.proxy_quality > row.proxy_quality,
                "seed {seed}: quality {} not above {} ({})",
                adaptive.proxy_quality,
                row.proxy_quality,
                row.method
            );
            assert!(
                adaptive.proxy_score >= row.proxy_score,
                "seed {seed}: score {} below {} ({})",
                adaptive.proxy_score,
                row.proxy_score,
                row.method
            );
        }
    }
    assert_within(start.elapsed(), Duration::from_secs(300), "cv ordering");
}

/// Invariant sweeps: 100 random cases per property (the proptest
/// equivalents live in the properties test target).
fn criterion_9_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spd = |rng: &mut ChaCha8Rng, p: usize, ridge: f64| -> DMatrix<f64> {
        let a = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0f64..1.0));
        &a * a.transpose() + DMatrix::identity(p, p) * ridge
    };
    let simplex = |rng: &mut ChaCha8Rng, d: usize| -> DVector<f64> {
        let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0f64..2.0).exp()).collect();
        let total: f64 = raw.iter().sum();
        DVector::from_iterator(d, raw.iter().map(|v| v / total))
    };
    let schema = |d: usize| {
        MetricSchema::new("long_term", (1..=d).map(|j| format!("proxy_{j}")).collect()).unwrap()
    };

    // gradient check
    for _ in 0..100 {
        let d = rng.gen_range(1..=3);
        let p = d + 1;
        let records: Vec<ExperimentRecord> = (0..3)
            .map(|i| {
                let xi = spd(&mut rng, p, 0.5);
                let delta = DVector::from_fn(p, |_, _| rng.gen_range(-2.0f64..2.0));
                ExperimentRecord::new(format!("e{i}"), 100, delta, xi).unwrap()
            })
            .collect();
        let corpus = Corpus::new(schema(d), records).unwrap();
        let prior = PriorSpec::new(
            DVector::from_element(p, 1.0),
            DVector::from_element(p, 1.0),
        )
        .unwrap();
        let theta = DVector::from_fn(theta_len(p), |_, _| rng.gen_range(-1.2f64..1.2));
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
            assert!(
                (fd - grad[k]).abs() / denom < 1e-5,
                "gradient coordinate {k}: {} vs {fd}",
                grad[k]
            );
        }
    }

    // quality bound and monotone noise damage
    for _ in 0..100 {
        let d = rng.gen_range(1..=4);
        let p = d + 1;
        let latent = LatentParams {
            mu: DVector::zeros(p),
            lambda: spd(&mut rng, p, 0.05),
        };
        let xi = spd(&mut rng, d, 0.0);
        let extra = spd(&mut rng, d, 0.0);
        let w = simplex(&mut rng, d);
        let rho = composite_quality(&w, &latent, &xi).unwrap();
        assert!(rho.abs() <= 1.0 + 1e-12, "|rho| = {}", rho.abs());
        let noisier = composite_quality(&w, &latent, &(&xi + &extra)).unwrap();
        assert!(noisier.abs() <= rho.abs() + 1e-12);
    }

    // simplex validity of optimized weights
    for _ in 0..100 {
        let d = rng.gen_range(1..=5);
        let p = d + 1;
        let mut lambda = spd(&mut rng, p, 0.05);
        if !(1..p).any(|j| lambda[(0, j)] > 0.0) {
            let v = lambda[(0, 1)].abs().max(0.01);
            lambda[(0, 1)] = v;
            lambda[(1, 0)] = v;
        }
        let latent = LatentParams {
            mu: DVector::zeros(p),
            lambda,
        };
        let weights = optimize_weights(&latent, &spd(&mut rng, d, 0.01)).unwrap();
        let total: f64 = weights.w.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(weights.w.iter().all(|&wi| wi >= 0.0));
    }

    // permutation invariance of the likelihood
    for _ in 0..100 {
        let d = rng.gen_range(1..=3);
        let p = d + 1;
        let k = rng.gen_range(2..=8);
        let shared_xi = spd(&mut rng, p, 0.3);
        let records: Vec<ExperimentRecord> = (0..k)
            .map(|i| {
                let xi = if i % 2 == 0 {
                    shared_xi.clone()
                } else {
                    spd(&mut rng, p, 0.3)
                };
                let delta = DVector::from_fn(p, |_, _| rng.gen_range(-2.0f64..2.0));
                ExperimentRecord::new(format!("e{i}"), 100, delta, xi).unwrap()
            })
            .collect();
        let mut shuffled = records.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut rng);
        let params = LatentParams {
            mu: DVector::zeros(p),
            lambda: spd(&mut rng, p, 0.05),
        };
        let a = marginal_log_likelihood(&params, &Corpus::new(schema(d), records).unwrap())
            .unwrap();
        let b = marginal_log_likelihood(&params, &Corpus::new(schema(d), shuffled).unwrap())
            .unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    // determinism of generation and solving
    for _ in 0..100 {
        let spec = GenSpec {
            mu: DVector::zeros(3),
            lambda: spd(&mut rng, 3, 0.05),
            noise: NoiseSpec::Explicit(vec![spd(&mut rng, 3, 0.1); 8]),
            count: 8,
            seed: rng.gen(),
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let problem = QPProblem {
            sigma: spd(&mut rng, 3, 0.1),
            r: DVector::from_fn(3, |_, _| rng.gen_range(0.01f64..1.0)),
        };
        let (xa, _) = solve_qp(&problem).unwrap();
        let (xb, _) = solve_qp(&problem).unwrap();
        assert_eq!(xa, xb);
    }
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, fn())> = vec![
        ("1 denoising recovery (K=1500, d=1)", criterion_1_denoising_recovery),
        ("2 QP vs simplex grid (100 instances)", criterion_2_qp_vs_grid),
        ("3 closed-form QP (0.8, 0.2)", criterion_3_closed_form_qp),
        ("4 alignment probability vs Monte Carlo", criterion_4_alignment_probability),
        ("5 estimator triangle (MAP/MCMC/moment)", criterion_5_estimator_triangle),
        ("6 adaptivity sweep over n", criterion_6_adaptivity_sweep),
        ("7 noise-model diagnostics", criterion_7_noise_diagnostics),
        ("8 cross-validated ordering", criterion_8_cv_ordering),
        ("9 invariant sweeps (100 cases each)", criterion_9_invariants),
    ];
    let mut failures = Vec::new();
    for (name, run) in criteria {
        match catch_unwind(AssertUnwindSafe(run)) {
            Ok(()) => println!("PASS: criterion {name}"),
            Err(err) => {
                let msg = err
                    .downcast_ref::<String>()
                    .map(|s| s.as_str())
                    .or_else(|| err.downcast_ref::<&str>().copied())
                    .unwrap_or("panic");
                println!("FAIL: criterion {name}: {msg}");
                failures.push(name);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
