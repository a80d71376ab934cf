use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gcmt_cli::{
    cmd_adapt_with_progress, cmd_eval, cmd_gen_data, cmd_pretrain, CliError, ExperimentConfig, Overrides, RawConfig,
};

#[derive(Parser)]
#[command(name = "gcmt", version, about = "Graph-consistency mean teaching experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `section.key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `run.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate the synthetic domains listed in `data.domains`.
    GenData,
    /// Supervised training on the source dataset.
    Pretrain,
    /// Mean-teaching adaptation on the target dataset.
    Adapt,
    /// Retrieval metrics of checkpoints on a dataset.
    Eval,
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let (raw, dir) = match &cli.config {
        Some(path) => {
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (RawConfig::load(path)?, dir)
        }
        None => (RawConfig::default(), PathBuf::from(".")),
    };
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
    };
    let cfg = ExperimentConfig::resolve(&raw, &overrides, &dir)?;
    match cli.command {
        Command::GenData => cmd_gen_data(&cfg),
        Command::Pretrain => cmd_pretrain(&cfg),
        Command::Adapt => cmd_adapt_with_progress(&cfg, |line| {
            if !cli.quiet {
                eprintln!("{line}");
            }
        }),
        Command::Eval => cmd_eval(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{}", summary.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
