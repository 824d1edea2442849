//! `chanest`: run Monte-Carlo experiments, summarise results, query bounds.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use chanest::harness::{
    bound_query, emit_csv, gnuplot_script, read_csv, run_experiment, summarize, write_csv, ExperimentConfig, Preset,
};
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "chanest", version, about = "Sparse mmWave channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment and write aggregated NMSE as CSV.
    Run {
        /// Flat TOML configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Start from a shipped setup: fig4, fig5 or fig6.
        #[arg(long)]
        preset: Option<Preset>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Base seed for all trials.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the per-point trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Record wall time per estimator (makes output run-dependent).
        #[arg(long)]
        timing: bool,
        /// Also write a gnuplot script plotting the CSV.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Print a text summary of a results CSV.
    Summarize { csv: PathBuf },
    /// Print both Cramer-Rao bounds for one sparsity ratio and SNR.
    Bound {
        #[arg(long)]
        eta: f64,
        /// SNR in dB.
        #[arg(long, allow_negative_numbers = true)]
        snr: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<Preset>,
        /// Seed for the support used by the sparse bound.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Exit status: 1 for configuration problems, 2 for runtime failures.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<chanest::Error> for Failure {
    fn from(e: chanest::Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

fn load_config(preset: Option<Preset>, path: Option<&PathBuf>) -> Result<ExperimentConfig, Failure> {
    if preset.is_none() && path.is_none() {
        return Err(Failure::Config(anyhow::anyhow!("give --config <file> and/or --preset fig4|fig5|fig6")));
    }
    ExperimentConfig::load(preset, path.map(|p| p.as_path())).map_err(|e| Failure::Config(e.into()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            preset,
            out,
            workers,
            seed,
            trials,
            timing,
            plot,
        } => {
            let mut cfg = load_config(preset, config.as_ref())?;
            if let Some(w) = workers {
                cfg.workers = Some(w);
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            cfg.timing |= timing;
            cfg.validate().map_err(|e| Failure::Config(e.into()))?;

            let start = Instant::now();
            let records = run_experiment(&cfg)?;
            eprintln!("{} records in {:.1} s", records.len(), start.elapsed().as_secs_f64());
            match &out {
                Some(path) => emit_csv(&records, path)?,
                None => write_csv(&records, std::io::stdout().lock())
                    .context("writing CSV to stdout")
                    .map_err(Failure::Runtime)?,
            }
            if let Some(script) = plot {
                let csv_name = out.as_ref().map_or("results.csv".to_string(), |p| p.display().to_string());
                std::fs::write(&script, gnuplot_script(&records, &csv_name))
                    .with_context(|| format!("writing {}", script.display()))
                    .map_err(Failure::Runtime)?;
            }
        }
        Command::Summarize { csv } => {
            let records = read_csv(&csv)?;
            print!("{}", summarize(&records)?);
        }
        Command::Bound {
            eta,
            snr,
            config,
            preset,
            seed,
        } => {
            let cfg = match (preset, &config) {
                (None, None) => ExperimentConfig::default(),
                _ => load_config(preset, config.as_ref())?,
            };
            let q = bound_query(&cfg, eta, snr, seed)?;
            println!(
                "eta={} snr={} dB nonzeros={} noise_var={}",
                q.eta, q.snr_db, q.nonzeros, q.noise_var
            );
            println!("crlb_lse: {:.4} dB", q.crlb_lse_db);
            println!("crlb_lse_smp: {:.4} dB", q.crlb_lse_smp_db);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
