use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ldpfo::bench::{self, Metric, RunOptions};
use ldpfo::MechanismId;

#[derive(Parser)]
#[command(
    name = "ldpfo",
    version,
    about = "Benchmark MI and IBU estimation over LDP frequency oracles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "LDPFO_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        #[arg(long, env = "LDPFO_WORKERS")]
        workers: Option<usize>,
    },
    /// Aggregate results into gain tables.
    Summarize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
        /// Where to write gains.csv, gains.json and table_*.csv (defaults to the input directory).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the supported mechanisms.
    ListMechanisms,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Mse,
    Mae,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            output_dir,
            workers,
        } => bench::load_config(&config)
            .and_then(|cfg| {
                bench::run_experiment(
                    &cfg,
                    &RunOptions {
                        output_dir,
                        workers,
                    },
                )
            })
            .map(|s| {
                println!(
                    "wrote {} rows to {}",
                    s.rows.len(),
                    s.results_path.display()
                )
            }),
        Command::Summarize {
            input,
            metric,
            output,
        } => {
            let metric = metric.map(|m| match m {
                MetricArg::Mse => Metric::Mse,
                MetricArg::Mae => Metric::Mae,
            });
            let out_dir = output.unwrap_or_else(|| {
                if input.is_dir() {
                    input.clone()
                } else {
                    input.parent().map(PathBuf::from).unwrap_or_default()
                }
            });
            bench::summarize(&input, metric, &out_dir).map(|s| {
                for t in &s.tables {
                    println!("{t}");
                }
            })
        }
        Command::ListMechanisms => {
            println!("{:<8} {:<13} {:<10} budget", "id", "family", "report");
            for id in MechanismId::all() {
                let (family, budget) = if id.is_longitudinal() {
                    ("longitudinal", "eps_inf, eps_1")
                } else {
                    ("one-shot", "eps")
                };
                println!(
                    "{:<8} {:<13} {:<10} {budget}",
                    id.as_str(),
                    family,
                    id.report_kind().name()
                );
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
