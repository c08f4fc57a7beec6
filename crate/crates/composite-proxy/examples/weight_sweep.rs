//! How the optimal proxy portfolio shifts with experiment size: at small
//! n the robust low-noise proxy dominates; as n grows the weight moves to
//! the better-aligned but noisier proxy.
//!
//! ```sh
//! cargo run --example weight_sweep
//! ```

use nalgebra::{DMatrix, DVector};

use composite_proxy::denoise::LatentParams;
use composite_proxy::noisescale::NoiseModel;
use composite_proxy::pipeline::{sweep_csv, sweep_weights};

fn main() -> composite_proxy::Result<()> {
    // proxy 1: correlation 0.8 with the long-term effect, 10x the noise;
    // proxy 2: correlation 0.4, cheap to measure
    let latent = LatentParams {
        mu: DVector::zeros(3),
        lambda: DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0, 0.8, 0.4, //
                0.8, 1.0, 0.32, //
                0.4, 0.32, 1.0,
            ],
        ),
    };
    let noise = NoiseModel {
        xi_ref: DMatrix::from_diagonal(&DVector::from_row_slice(&[1e6, 1e6, 1e5])),
        source_count: 1,
    };

    let ns: Vec<u64> = (4..=8).map(|e| 10u64.pow(e)).collect();
    let rows = sweep_weights(&latent, &noise, &ns)?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}
