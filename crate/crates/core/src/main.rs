use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use interest_retrieval::cli::{run, Command, Strategy};

#[derive(Parser)]
#[command(name = "interest-retrieval", version, about = "Interest-clustered candidate retrieval pipeline")]
struct Cli {
    /// Pipeline config file (`key=value` lines).
    #[arg(long, global = true, default_value = "pipeline.conf")]
    config: PathBuf,

    /// Override a config key, e.g. `--set model.fusion=none`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse, filter and split the raw interactions.
    Ingest,
    /// Louvain clustering of the train co-engagement graph.
    Cluster,
    /// Per-user interest profiles.
    Interest,
    /// Train the two-tower model.
    Train,
    /// Produce top-K lists for test users and time them.
    Retrieve {
        #[arg(long)]
        strategy: Option<Strategy>,
    },
    /// Score recommendations against the test split.
    Evaluate {
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Reference label for the engagement-decile table, e.g. `full-none`.
        #[arg(long, value_name = "LABEL")]
        deciles: Option<String>,
        /// Write the item-popularity report.
        #[arg(long)]
        popularity: bool,
    },
    /// Cluster assignment agreement across temporal prefixes.
    Stability,
    /// Learning-rate by dropout grid on validation recall.
    Grid,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let command = match cli.command {
        Cmd::Ingest => Command::Ingest,
        Cmd::Cluster => Command::Cluster,
        Cmd::Interest => Command::Interest,
        Cmd::Train => Command::Train,
        Cmd::Retrieve { strategy } => Command::Retrieve { strategy },
        Cmd::Evaluate { strategy, deciles, popularity } => Command::Evaluate { strategy, deciles, popularity },
        Cmd::Stability => Command::Stability,
        Cmd::Grid => Command::Grid,
    };
    match run(&command, &cli.config, &cli.overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
