//! Cross-validated comparison of the adaptive composite proxy against
//! single-proxy baselines on a synthetic corpus with one aligned-noisy
//! and one sensitive-misaligned proxy.
//!
//! ```sh
//! cargo run --release --example cv_report
//! ```

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use composite_proxy::evalharness::{cv_evaluate, default_cv_config, default_methods};
use composite_proxy::synthgen::{generate, GenSpec, NoiseSpec};

fn main() -> composite_proxy::Result<()> {
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
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let sizes: Vec<u64> = (0..300)
        .map(|_| {
            let log_n = rng.gen_range(3.0f64..4.3) * std::f64::consts::LN_10;
            log_n.exp() as u64
        })
        .collect();
    let spec = GenSpec {
        mu: DVector::zeros(3),
        lambda,
        noise: NoiseSpec::Scaled { xi_ref, sizes },
        count: 300,
        seed: 321,
    };
    let (corpus, _) = generate(&spec)?;

    let methods = default_methods(&corpus);
    let report = cv_evaluate(&corpus, 4, &methods, 0, &default_cv_config(0))?;
    print!("{}", report.to_table());
    Ok(())
}
