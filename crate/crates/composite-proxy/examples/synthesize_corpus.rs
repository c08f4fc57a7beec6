//! Generate a synthetic corpus from the two-level Gaussian model and
//! write it in the JSON-lines corpus format.
//!
//! ```sh
//! cargo run --example synthesize_corpus
//! ```

use nalgebra::{DMatrix, DVector};

use composite_proxy::corpus::save_corpus;
use composite_proxy::synthgen::{generate, GenSpec, NoiseSpec};

fn main() -> composite_proxy::Result<()> {
    // latent population: one long-term outcome, two proxies
    let lambda = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0, 0.8, 0.3, //
            0.8, 1.0, 0.24, //
            0.3, 0.24, 1.0,
        ],
    ) * 0.01;

    // noise scales as Ξ_ref / n across a spread of experiment sizes
    let xi_ref = DMatrix::from_diagonal(&DVector::from_row_slice(&[2.5, 25.0, 2.5]));
    let sizes: Vec<u64> = (0..500).map(|i| 1_000 + 199 * i as u64).collect();

    let spec = GenSpec {
        mu: DVector::zeros(3),
        lambda,
        noise: NoiseSpec::Scaled { xi_ref, sizes },
        count: 500,
        seed: 42,
    };
    let (corpus, latents) = generate(&spec)?;

    let out = std::env::temp_dir().join("synthetic_corpus.jsonl");
    save_corpus(&corpus, &out)?;
    println!(
        "wrote {} records ({} metrics) to {}",
        corpus.len(),
        corpus.dim(),
        out.display()
    );
    println!(
        "first latent effect: {:?}  observed: {:?}",
        latents[0].as_slice(),
        corpus.records[0].delta_hat.as_slice()
    );
    Ok(())
}
