//! Command-line front end. All logic lives in the library; this binary
//! parses arguments, wires files to the library calls, and maps errors to
//! exit codes (1 = validation, 2 = numerical failure).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use composite_proxy::corpus::{load_corpus, load_pending, save_corpus};
use composite_proxy::denoise::{
    auto_prior, fit_map, fit_mcmc, FitConfig, InferenceMethod, LatentParamsFile,
};
use composite_proxy::error::{Error, Result};
use composite_proxy::evalharness::{cv_evaluate, default_cv_config, default_methods};
use composite_proxy::noisescale::{estimate_xi_ref, fit_power_law, NoiseModelFile};
use composite_proxy::pipeline::{
    run_pipeline, sweep_csv, sweep_weights, write_outputs, PipelineConfig,
};
use composite_proxy::synthgen::{generate, GenSpecFile};

#[derive(Parser)]
#[command(name = "composite-proxy", version, about = "Sample-size-adaptive composite proxy metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Map,
    Mcmc,
}

impl From<Method> for InferenceMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Map => InferenceMethod::Map,
            Method::Mcmc => InferenceMethod::Mcmc,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus from a generator spec (JSON).
    Synth {
        /// Generator spec file.
        #[arg(long)]
        spec: PathBuf,
        /// Output corpus (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the latent population model (μ, Λ) to a corpus.
    Fit {
        #[arg(long)]
        corpus: PathBuf,
        /// Output latent-parameters JSON.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "map")]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimate the reference noise covariance Ξ_ref and report the
    /// variance-vs-n power-law diagnostic.
    Noise {
        #[arg(long)]
        corpus: PathBuf,
        /// Output noise-model JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute weights for pending experiments from a fitted corpus.
    Weights {
        #[arg(long)]
        corpus: PathBuf,
        /// Pending-experiments file (JSON lines).
        #[arg(long)]
        pending: PathBuf,
        /// Output weights JSON.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "map")]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep weights across a grid of sample sizes.
    Sweep {
        #[arg(long)]
        corpus: PathBuf,
        /// Comma-separated sample sizes, e.g. 10000,100000,1000000.
        #[arg(long, value_delimiter = ',')]
        n_grid: Vec<u64>,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cross-validated comparison of the adaptive composite against
    /// single-proxy baselines.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 4)]
        k_folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV (the table is also printed).
        #[arg(long)]
        out: PathBuf,
    },
    /// Full run: fit, noise model, and weights for pending experiments,
    /// writing all artifacts into a directory.
    Pipeline {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        pending: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "map")]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn fit_config(method: Method, seed: u64) -> FitConfig {
    FitConfig {
        method: method.into(),
        seed,
        ..FitConfig::default()
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, out } => {
            let raw = std::fs::read_to_string(&spec)?;
            let file: GenSpecFile = serde_json::from_str(&raw).map_err(|e| Error::Parse {
                line: e.line(),
                msg: e.to_string(),
            })?;
            let (corpus, _) = generate(&file.into_spec()?)?;
            save_corpus(&corpus, &out)?;
            println!("wrote {} records to {}", corpus.len(), out.display());
        }
        Command::Fit {
            corpus,
            out,
            method,
            seed,
        } => {
            let corpus = load_corpus(&corpus)?;
            let prior = auto_prior(&corpus)?;
            let config = fit_config(method, seed);
            let params = match config.method {
                InferenceMethod::Map => fit_map(&corpus, &prior, &config)?,
                InferenceMethod::Mcmc => {
                    let (params, diag) = fit_mcmc(&corpus, &prior, &config)?;
                    let diag_path = out.with_extension("diagnostics.json");
                    std::fs::write(
                        &diag_path,
                        serde_json::to_string_pretty(&diag)
                            .map_err(|e| Error::Invalid(e.to_string()))?,
                    )?;
                    println!("sampler diagnostics written to {}", diag_path.display());
                    params
                }
            };
            let body = serde_json::to_string_pretty(&LatentParamsFile::from(&params))
                .map_err(|e| Error::Invalid(e.to_string()))?;
            std::fs::write(&out, body + "\n")?;
            println!("latent parameters written to {}", out.display());
        }
        Command::Noise { corpus, out } => {
            let corpus = load_corpus(&corpus)?;
            let model = estimate_xi_ref(&corpus)?;
            let body = serde_json::to_string_pretty(&NoiseModelFile::from(&model))
                .map_err(|e| Error::Invalid(e.to_string()))?;
            std::fs::write(&out, body + "\n")?;
            println!("noise model written to {}", out.display());
            match fit_power_law(&corpus, 0) {
                Ok(fit) => println!(
                    "power-law diagnostic (long-term variance vs n): exponent {:.4}, r² {:.4}",
                    fit.exponent, fit.r_squared
                ),
                Err(e) => eprintln!("power-law diagnostic unavailable: {e}"),
            }
        }
        Command::Weights {
            corpus,
            pending,
            out,
            method,
            seed,
        } => {
            let corpus = load_corpus(&corpus)?;
            let (_, pending) = load_pending(&pending)?;
            let config = PipelineConfig {
                fit: fit_config(method, seed),
            };
            let outcome = run_pipeline(&corpus, &pending, &config)?;
            let body = serde_json::to_string_pretty(&outcome.weights)
                .map_err(|e| Error::Invalid(e.to_string()))?;
            std::fs::write(&out, body + "\n")?;
            println!("weights for {} experiments written to {}", outcome.weights.len(), out.display());
        }
        Command::Sweep {
            corpus,
            n_grid,
            out,
            seed,
        } => {
            if n_grid.is_empty() {
                return Err(Error::Invalid("--n-grid must list at least one size".into()));
            }
            let corpus = load_corpus(&corpus)?;
            let prior = auto_prior(&corpus)?;
            let config = fit_config(Method::Map, seed);
            let latent = fit_map(&corpus, &prior, &config)?;
            let noise = estimate_xi_ref(&corpus)?;
            let rows = sweep_weights(&latent, &noise, &n_grid)?;
            std::fs::write(&out, sweep_csv(&rows))?;
            println!("sweep over {} sizes written to {}", rows.len(), out.display());
        }
        Command::Eval {
            corpus,
            k_folds,
            seed,
            out,
        } => {
            let corpus = load_corpus(&corpus)?;
            let methods = default_methods(&corpus);
            let report = cv_evaluate(&corpus, k_folds, &methods, seed, &default_cv_config(seed))?;
            print!("{}", report.to_table());
            std::fs::write(&out, report.to_csv())?;
            println!("csv written to {}", out.display());
        }
        Command::Pipeline {
            corpus,
            pending,
            out,
            method,
            seed,
        } => {
            let corpus = load_corpus(&corpus)?;
            let (_, pending) = load_pending(&pending)?;
            let config = PipelineConfig {
                fit: fit_config(method, seed),
            };
            let outcome = run_pipeline(&corpus, &pending, &config)?;
            write_outputs(&outcome, &out)?;
            println!("pipeline artifacts written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
