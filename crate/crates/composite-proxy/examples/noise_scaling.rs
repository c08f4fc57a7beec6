//! Fit the Ξ_ref/n noise model to a corpus and check the 1/n ansatz with
//! the power-law diagnostic.
//!
//! ```sh
//! cargo run --example noise_scaling
//! ```

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use composite_proxy::corpus::{Corpus, ExperimentRecord, MetricSchema};
use composite_proxy::noisescale::{estimate_xi_ref, fit_power_law, predict_xi};

fn main() -> composite_proxy::Result<()> {
    let xi_ref = DMatrix::from_row_slice(2, 2, &[4.0, 0.8, 0.8, 2.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let schema = MetricSchema::new("long_term", vec!["proxy_1".into()])?;
    // per-record covariances follow Ξ_ref/n with 20% lognormal jitter
    let records: Vec<ExperimentRecord> = (0..300)
        .map(|i| {
            let log_n = rng.gen_range(4.0f64..8.0) * std::f64::consts::LN_10;
            let n = log_n.exp() as u64;
            let jitter = (0.2 * rng.sample::<f64, _>(StandardNormal)).exp();
            ExperimentRecord::new(
                format!("e{i}"),
                n,
                DVector::zeros(2),
                &xi_ref * (jitter / n as f64),
            )
        })
        .collect::<Result<_, _>>()?;
    let corpus = Corpus::new(schema, records)?;

    let fit = fit_power_law(&corpus, 0)?;
    println!(
        "variance vs n: exponent {:.4} (1/n ansatz wants -1), r² {:.4}",
        fit.exponent, fit.r_squared
    );

    let model = estimate_xi_ref(&corpus)?;
    println!("true Ξ_ref:\n{:.3}", xi_ref);
    println!("estimated Ξ_ref:\n{:.3}", model.xi_ref);
    println!(
        "predicted covariance for a 1M-unit experiment:\n{:.3e}",
        predict_xi(&model, 1_000_000)?
    );
    Ok(())
}
