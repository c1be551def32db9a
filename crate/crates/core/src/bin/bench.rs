use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use morphbench::bench::{
    evaluate_checkpoint, load_data, report_from_dir, run_benchmark_with, train_family, BenchConfig,
};
use morphbench::eval::EvalOptions;
use morphbench::nn::{Family, Preset};
use morphbench::schema::build_gzd5_schema;
use morphbench::synth::{generate_synthetic, SyntheticSpec};
use morphbench::train::TrainOptions;

/// Galaxy morphology CNN benchmark.
#[derive(Parser)]
#[command(name = "bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic catalog and images.
    Synth {
        /// JSON synthetic spec; defaults are used for missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one family and write checkpoint and training log.
    Train {
        #[arg(long)]
        family: Family,
        #[arg(long, default_value = "tiny")]
        config: Preset,
        /// Catalog CSV or a directory containing catalog.csv.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 10)]
        patience: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 200)]
        max_epochs: usize,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint with Monte-Carlo passes and write metrics.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        passes: usize,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Evaluate on a fresh split drawn with this seed.
        #[arg(long)]
        resplit: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the comparison report from a benchmark output directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run data generation, training, evaluation and reporting from one config.
    All {
        #[arg(long)]
        config: PathBuf,
    },
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("MORPHBENCH_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| format!("MORPHBENCH_THREADS={value:?} is not a positive integer"))?;
    if n == 0 {
        return Err("MORPHBENCH_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(cli: Cli) -> morphbench::Result<bool> {
    let schema = Arc::new(build_gzd5_schema());
    match cli.command {
        Command::Synth { spec, out } => {
            let spec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| morphbench::Error::InvalidArgument(format!("{}: {e}", path.display())))?;
                    serde_json::from_str(&text)?
                }
                None => SyntheticSpec::default(),
            };
            let catalog = generate_synthetic(&spec, schema, &out)?;
            println!("wrote {} galaxies to {}", catalog.len(), out.display());
        }
        Command::Train {
            family,
            config,
            data,
            batch_size,
            patience,
            lr,
            max_epochs,
            test_fraction,
            seed,
            out,
        } => {
            let catalog = load_data(&data, schema)?;
            let opts = TrainOptions {
                batch_size,
                patience,
                learning_rate: lr,
                max_epochs,
                seed,
                ..TrainOptions::default()
            };
            let log = train_family(family, config, &catalog, test_fraction, &opts, &out, |e| {
                eprintln!(
                    "epoch {}: train {:.4} val {:.4} ({:.1} s)",
                    e.epoch, e.train_loss, e.val_loss, e.seconds
                )
            })?;
            println!(
                "{family}: {} epochs, best {} ({:.4}), {:.3} h",
                log.epochs_run(),
                log.best_epoch,
                log.best_val_loss(),
                log.total_hours()
            );
        }
        Command::Eval {
            checkpoint,
            data,
            passes,
            threshold,
            resplit,
            seed,
            out,
        } => {
            let catalog = load_data(&data, schema)?;
            let opts = EvalOptions {
                passes,
                threshold,
                seed,
                ..EvalOptions::default()
            };
            let report = evaluate_checkpoint(&checkpoint, &catalog, &opts, resplit, &out)?;
            print!("{}", report.to_table());
        }
        Command::Report { input, out } => {
            report_from_dir(&input)?.write(&out)?;
            println!("report written to {}", out.display());
        }
        Command::All { config } => {
            let config = BenchConfig::load(&config)?;
            let outcome = run_benchmark_with(&config, |msg| eprintln!("{msg}"))?;
            println!("report written to {}", outcome.report_dir.display());
            return Ok(!outcome.failed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: at least one family failed; see the report");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
