use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use doclab_cli::{validate_config, Pipeline, Stage};

#[derive(Parser)]
#[command(
    name = "doclab",
    version,
    about = "Density-of-classifiers experiments for small leaky-ReLU networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the density of classifiers (doc.json, doc.csv)
    Doc(Common),
    /// Rejection-sample zero-training-error solutions (trials.csv)
    Qn(Common),
    /// Probe solution volumes per training set (volumes.csv)
    Volumes(Common),
    /// Evaluate bound curves from doc.json (bounds.csv)
    Bounds(Common),
    /// Run the full pipeline, or resume it with --stage
    Run(Common),
    /// Rebuild report.json and plots from existing artifacts
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker count; results do not depend on it
    #[arg(long)]
    workers: Option<usize>,
    /// Root for artifact directories
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// With `run`: first stage to execute, earlier ones are read from disk
    #[arg(long, value_enum)]
    stage: Option<Stage>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, stages): (&Common, Vec<Stage>) = match &cli.command {
        Command::Doc(c) => (c, vec![Stage::Doc]),
        Command::Qn(c) => (c, vec![Stage::Qn]),
        Command::Volumes(c) => (c, vec![Stage::Volumes]),
        Command::Bounds(c) => (c, vec![Stage::Bounds]),
        Command::Report(c) => (c, vec![Stage::Report]),
        Command::Run(c) => {
            let from = c.stage.unwrap_or(Stage::Doc);
            (c, Stage::ALL.into_iter().filter(|&s| s >= from).collect())
        }
    };
    if common.stage.is_some() && !matches!(cli.command, Command::Run(_)) {
        eprintln!("error: --stage only applies to `run`");
        return ExitCode::from(1);
    }
    let mut config = match validate_config(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", common.config.display());
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(workers) = common.workers {
        if workers == 0 {
            eprintln!("error: --workers must be ≥ 1");
            return ExitCode::from(1);
        }
        config.workers = workers;
    }
    let pipeline = Pipeline::new(config, &common.out_dir);
    match pipeline.run_stages(&stages) {
        Ok(report) => {
            if let Some(r) = report {
                print!("{}", r.summary_table());
            }
            println!("artifacts: {}", pipeline.dir().display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("partial artifacts: {}", pipeline.dir().display());
            ExitCode::from(2)
        }
    }
}
