//! `gfi`: simulate data, fit distributed fiducial models, and run coverage
//! and timing experiments.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use gfi_core::combiner::write_trace;
use gfi_core::harness::{
    coverage_experiment, read_data_file, run_pipeline, timing_experiment, write_data, write_timings, Algorithm,
    ExperimentConfig, FitConfig, TimingConfig,
};
use gfi_core::models::ModelConfig;
use gfi_core::seed::{self, Role};
use gfi_core::{DNorm, Error};

const EXIT_INVALID: u8 = 2;
const EXIT_STATISTICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "gfi", version, about = "Distributed generalized fiducial inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a data set from a model at a given parameter.
    Simulate {
        #[arg(long)]
        model: String,
        /// Comma-separated parameter vector.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        theta: Vec<f64>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Threshold used when simulating the GPD tail model.
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model to a CSV data set.
    Fit {
        #[arg(long)]
        model: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        t: usize,
        #[arg(long, default_value = "method-g")]
        algorithm: Algorithm,
        #[arg(long, default_value = "d2")]
        norm: DNorm,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        concurrency: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Write each worker's chain as CSV into this directory.
        #[arg(long)]
        dump_chains: Option<PathBuf>,
        /// Write the merge trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write per-phase wall-clock times as JSON.
        #[arg(long)]
        timings: Option<PathBuf>,
    },
    /// Run a coverage experiment described by a JSON config.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the pipeline over a grid of worker counts.
    Timing {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_statistical() => EXIT_STATISTICAL,
        _ => EXIT_INVALID,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
        .map_err(Into::into)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn simulate(model: &str, theta: &[f64], n: usize, seed_value: u64, threshold: f64, out: &Path) -> anyhow::Result<()> {
    let cfg = match ModelConfig::from_name(model, Some(theta.len()))? {
        ModelConfig::Gpd { threshold_quantile, .. } => ModelConfig::Gpd {
            threshold: Some(threshold),
            threshold_quantile,
        },
        other => other,
    };
    if theta.len() != cfg.dim() {
        return Err(Error::InvalidConfig(format!("{model} needs {} parameters, got {}", cfg.dim(), theta.len())).into());
    }
    let m = cfg.build::<f64>(None)?;
    if !m.in_support(theta) {
        return Err(Error::InvalidConfig("theta lies outside the model support".into()).into());
    }
    let data = m.simulate(theta, n, &mut seed::derived_rng(seed_value, Role::Simulate, &[]));
    write_data(&data, create(out)?)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate {
            model,
            theta,
            n,
            seed,
            threshold,
            out,
        } => simulate(&model, &theta, n, seed, threshold, &out),
        Command::Fit {
            model,
            data,
            k,
            t,
            algorithm,
            norm,
            seed,
            burn_in,
            concurrency,
            out,
            dump_chains,
            trace,
            timings,
        } => {
            let obs = read_data_file(&data).with_context(|| format!("reading {}", data.display()))?;
            let q = obs.first().map_or(0, |o| o.covariates.len());
            let cfg = FitConfig {
                model: ModelConfig::from_name(&model, Some(q + 2))?,
                k,
                t,
                burn_in,
                algorithm,
                norm,
                seed,
                concurrency,
            };
            let res = run_pipeline(&obs, &cfg)?;
            fs::write(&out, res.summary.to_json()? + "\n").with_context(|| format!("writing {}", out.display()))?;
            if let Some(dir) = dump_chains {
                fs::create_dir_all(&dir)?;
                for c in &res.chains {
                    c.write_csv(create(&dir.join(format!("chain_{}.csv", c.subset_id)))?)?;
                }
            }
            if let Some(path) = trace {
                write_trace(&res.trace, create(&path)?)?;
            }
            if let Some(path) = timings {
                fs::write(path, serde_json::to_string_pretty(&res.timings)?)?;
            }
            log::info!("fit finished in {:.2}s", res.timings.total);
            Ok(())
        }
        Command::Coverage { config, out } => {
            let cfg: ExperimentConfig = read_json(&config)?;
            let report = coverage_experiment(&cfg)?;
            report.write_csv(create(&out)?)?;
            report.ensure_valid()?;
            Ok(())
        }
        Command::Timing { config, out } => {
            let cfg: TimingConfig = read_json(&config)?;
            let rows = timing_experiment(&cfg)?;
            write_timings(&rows, create(&out)?)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
