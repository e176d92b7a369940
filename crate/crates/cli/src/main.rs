use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use hpgmn_cli::{cmd_ablate, cmd_stats, cmd_sweep, cmd_train, Outcome, RunOptions};

#[derive(Parser)]
#[command(
    name = "hpgmn",
    version,
    about = "Memory-network node classification experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print node, edge, feature, class and homophily counts for a dataset directory.
    Stats { dir: PathBuf },
    /// Train and evaluate the full model on every selected split.
    Train(RunArgs),
    /// Run the full model and every ablation variant.
    Ablate(RunArgs),
    /// Grid over K, alpha_kpattern and beta.
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(short, long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reuse per-split metric files that already exist.
    #[arg(long)]
    resume: bool,
}

impl RunArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
            resume: self.resume,
        }
    }
}

fn report(outcome: anyhow::Result<Outcome>) -> ExitCode {
    match outcome {
        Ok(o) => {
            for a in &o.aggregates {
                println!(
                    "{}: {:.4} ± {:.4} over {} splits ({} failed)",
                    a.name,
                    a.mean_test_accuracy,
                    a.std_test_accuracy,
                    a.test_accuracies.len(),
                    a.failures.len()
                );
            }
            if o.partial {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let t = Instant::now();
    let code = match cli.command {
        Command::Stats { dir } => match cmd_stats(&dir) {
            Ok(csv) => {
                print!("{csv}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
        Command::Train(a) => report(cmd_train(&a.config, &a.options())),
        Command::Ablate(a) => report(cmd_ablate(&a.config, &a.options())),
        Command::Sweep(a) => report(cmd_sweep(&a.config, &a.options())),
    };
    eprintln!("finished in {:.2}s", t.elapsed().as_secs_f64());
    code
}
