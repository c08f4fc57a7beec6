//! Full pipeline: fit the latent model and the noise model on a corpus,
//! then produce sample-size-adaptive proxy weights for a batch of pending
//! experiments and write all artifacts to disk.
//!
//! ```sh
//! cargo run --example pipeline_end_to_end
//! ```

use nalgebra::{DMatrix, DVector};

use composite_proxy::corpus::PendingExperiment;
use composite_proxy::pipeline::{run_pipeline, write_outputs, PipelineConfig};
use composite_proxy::synthgen::{generate, GenSpec, NoiseSpec};

fn main() -> composite_proxy::Result<()> {
    let lambda = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0, 0.7, 0.4, //
            0.7, 1.0, 0.28, //
            0.4, 0.28, 1.0,
        ],
    ) * 0.01;
    let xi_ref = DMatrix::from_diagonal(&DVector::from_row_slice(&[3.0, 12.0, 3.0]));
    let sizes: Vec<u64> = (0..400).map(|i| 2_000 + 211 * i as u64).collect();
    let spec = GenSpec {
        mu: DVector::zeros(3),
        lambda,
        noise: NoiseSpec::Scaled { xi_ref, sizes },
        count: 400,
        seed: 99,
    };
    let (corpus, _) = generate(&spec)?;

    // one upcoming experiment known only by size, one already measured
    let pending = vec![
        PendingExperiment {
            id: "launch-a".into(),
            n: 50_000,
            delta_hat_p: None,
            xi_hat_pp: None,
        },
        PendingExperiment {
            id: "launch-b".into(),
            n: 500_000,
            delta_hat_p: Some(DVector::from_row_slice(&[0.08, 0.01])),
            xi_hat_pp: Some(DMatrix::identity(2, 2) * 2e-4),
        },
    ];

    let outcome = run_pipeline(&corpus, &pending, &PipelineConfig::default())?;
    for pw in &outcome.weights {
        println!(
            "{:<10} n={:<8} w={:?}  rho={:.4}  P(align)={:.4}  decision={:?}",
            pw.id,
            pw.n,
            pw.w.iter().map(|w| (w * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            pw.rho,
            pw.alignment_probability,
            pw.decision
        );
    }

    let dir = std::env::temp_dir().join("composite-proxy-artifacts");
    write_outputs(&outcome, &dir)?;
    println!("artifacts written to {}", dir.display());
    Ok(())
}
