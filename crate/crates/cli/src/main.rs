use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lgrad_cli::bench::{format_table, run_bench, write_timing, TIMING_FILE};
use lgrad_cli::generate::generate_dataset;
use lgrad_cli::montage::emit_channel_montage;
use lgrad_cli::runner::{resolve_out_dir, thread_pool};
use lgrad_cli::{run_experiment, CliError, ExperimentConfig, PointFilter, RunOptions};
use lgrad_core::{mobs, ChannelMatrix};

#[derive(Parser)]
#[command(name = "lgrad", version, about = "Efficient-channel model observer experiments")]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides experiment.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory or file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a labelled phantom dataset as MOBS files.
    Generate,
    /// Run the experiment grid and write results.csv.
    Run {
        /// Only this grid point, as method:num_train:num_channels:replicate.
        #[arg(long)]
        point: Option<PointFilter>,
    },
    /// Time channel generation over training sizes.
    Bench,
    /// Write a PGM montage of channels stored in a MOBS file.
    Montage {
        #[arg(long)]
        input: PathBuf,
        /// Use only the first N channels.
        #[arg(long)]
        count: Option<usize>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate => {
            let cfg = load_config(cli)?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("dataset"));
            let n = generate_dataset(&cfg, cfg.experiment.seed, &out)?;
            println!("wrote {n} images to {}", out.display());
            Ok(())
        }
        Command::Run { point } => {
            let cfg = load_config(cli)?;
            let opts = RunOptions {
                out_dir: cli.out.clone(),
                seed: cli.seed,
                threads: cli.threads,
                point: *point,
            };
            let outcome = run_experiment(&cfg, &opts)?;
            println!(
                "{} grid points scored, {} failed; results in {}",
                outcome.rows.len(),
                outcome.errors.len(),
                outcome.out_dir.display()
            );
            if outcome.errors.is_empty() {
                Ok(())
            } else {
                Err(CliError::Runtime(format!(
                    "{} grid points failed; see errors.csv",
                    outcome.errors.len()
                )))
            }
        }
        Command::Bench => {
            let cfg = load_config(cli)?;
            let out = cli.out.clone().unwrap_or_else(|| {
                resolve_out_dir(&cfg, &RunOptions::default())
            });
            let pool = thread_pool(cli.threads.or(Some(1)))?;
            let (records, failure) = pool.install(|| run_bench(&cfg, cfg.experiment.seed));
            std::fs::create_dir_all(&out)?;
            write_timing(&out.join(TIMING_FILE), &records)?;
            print!("{}", format_table(&records));
            failure.map_or(Ok(()), Err)
        }
        Command::Montage { input, count } => {
            let stack = mobs::load(input).map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
            let n = count.unwrap_or(stack.len()).min(stack.len());
            if n == 0 {
                return Err(CliError::Config(format!("{} holds no channels", input.display())));
            }
            let channels = ChannelMatrix::new(stack.data().slice(ndarray::s![..n, ..]).to_owned())
                .map_err(CliError::config)?;
            let out = cli.out.clone().unwrap_or_else(|| input.with_extension("pgm"));
            emit_channel_montage(&channels, stack.height(), stack.width(), &out)?;
            println!("wrote {n} channels to {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lgrad: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
