use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

mod commands;

/// Build, deform, match and benchmark folksodriven structure networks.
#[derive(Parser, Debug)]
#[command(name = "folkso", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Aggregate a JSONL tag-event stream into a JSONL tag table.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Link a tag table into a network snapshot.
    Build {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Attach a 3D spectral layout to a snapshot.
    Embed {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Strain, stress and energy of the deformation from one snapshot to another.
    Deform {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        snapshot_b: PathBuf,
        /// Optional per-node JSONL dump.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        moduli: ModuliArgs,
        #[arg(long, value_enum, default_value_t = RhoMode::Uniform)]
        rho_mode: RhoMode,
    },
    /// Elasticity-aware matching between two snapshots.
    Match {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        snapshot_b: PathBuf,
        /// Optional full correspondence as JSON.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Suggest tags for a label, topic or resource URI.
    Suggest {
        query: String,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
    },
    /// Compare predicted scores against gold scores (JSONL `{"id", "score"}`).
    Score { pred: PathBuf, gold: PathBuf },
    /// Time seeded hashtag queries against a snapshot.
    Bench {
        #[arg(long)]
        snapshot: PathBuf,
        /// Optional full latency report as JSON.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        queries: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Degree distribution and power-law exponent of a snapshot.
    FitDegree {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = 4)]
        kmin: usize,
    },
}

#[derive(Args, Debug, Clone, Copy)]
struct ModuliArgs {
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long = "lambda", default_value_t = 1.0)]
    lambda: f64,
}

#[derive(Args, Debug, Clone, Copy)]
struct MatchArgs {
    #[arg(long, default_value_t = 5)]
    cand_m: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[command(flatten)]
    moduli: ModuliArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum RhoMode {
    Uniform,
    Impressions,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{detail}")]
    Data { code: String, detail: String },
}

impl CliError {
    fn usage(detail: impl Into<String>) -> Self {
        CliError::Usage(detail.into())
    }

    /// Data error whose code is the variant name of `err`.
    fn data<E: std::fmt::Debug + std::fmt::Display>(err: E) -> Self {
        let debug = format!("{err:?}");
        let code = debug.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("DataError").to_string();
        CliError::Data { code, detail: err.to_string() }
    }

    fn code(&self) -> &str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Data { code, .. } => code,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data { .. } => 2,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FOLKSO_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let detail = e.kind().to_string();
            return report(&CliError::usage(detail));
        }
    };
    match commands::run(cli.command) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> ExitCode {
    println!("{}", serde_json::json!({ "error": e.code(), "detail": e.to_string() }));
    ExitCode::from(e.exit_code())
}
