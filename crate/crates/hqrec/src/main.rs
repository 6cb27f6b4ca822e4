//! `hqrec` binary: train, evaluate, export, retrieve, and benchmark
//! quantized graph embeddings. Exit codes: 0 success, 2 usage or input
//! error, 3 numerical failure. HQ_LOG selects verbosity (error|info|debug).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hqrec::commands::{self, RetrieveQuery};
use hqrec::CliError;

#[derive(Parser)]
#[command(name = "hqrec", version, about = "Quantized graph-embedding trainer and retriever")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model; writes checkpoint, code tables, and reports
    Train(TrainArgs),
    /// Evaluate a checkpoint on its held-out test split
    Eval(EvalArgs),
    /// Re-export integer code tables from a checkpoint
    Export(ExportArgs),
    /// Rank items for one user or raw code row
    Retrieve(RetrieveArgs),
    /// Latency benchmark of the integer vs float scoring paths
    Bench(BenchArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Config file of key=value lines ('#' comments); flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Interaction file: one "user<TAB>item" pair per line
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for the checkpoint and reports
    #[arg(long)]
    out: Option<PathBuf>,
    /// Quantizer bit width (1..=16)
    #[arg(long)]
    bits: Option<u8>,
    /// Propagation depth
    #[arg(long)]
    layers: Option<usize>,
    /// Embedding dimension
    #[arg(long)]
    dim: Option<usize>,
    /// Learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// L2 regularization strength
    #[arg(long)]
    alpha: Option<f64>,
    /// Training epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Master seed for init, splits, sampling, and probes
    #[arg(long)]
    seed: Option<u64>,
    /// Gradient estimator through rounding
    #[arg(long, value_parser = ["ste", "gste"])]
    estimator: Option<String>,
    /// Ranking cutoff for validation and test metrics
    #[arg(long)]
    k: Option<usize>,
    /// Worker cap (scoring currently runs single-threaded)
    #[arg(long)]
    threads: Option<usize>,
    /// Positives per SGD batch
    #[arg(long)]
    batch_size: Option<usize>,
    /// Epochs without validation improvement before stopping
    #[arg(long)]
    patience: Option<usize>,
    /// Fraction of each user's interactions used for training
    #[arg(long)]
    train_frac: Option<f64>,
    /// Fraction carved out of the train portion for validation
    #[arg(long)]
    val_frac: Option<f64>,
    /// Set false to train the full-precision reference
    #[arg(long)]
    quantize: Option<bool>,
    /// Extra key=value overrides (same keys as the config file)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl TrainArgs {
    /// Flatten typed flags into ordered key=value overrides; --set pairs
    /// apply first so explicit flags win.
    fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut pairs = Vec::new();
        for raw in &self.set {
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("--set {raw:?}: expected KEY=VALUE")))?;
            pairs.push((key.trim().to_string(), value.to_string()));
        }
        let mut push = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                pairs.push((key.to_string(), v));
            }
        };
        push("data", self.data.as_ref().map(|p| p.display().to_string()));
        push("out", self.out.as_ref().map(|p| p.display().to_string()));
        push("bits", self.bits.map(|v| v.to_string()));
        push("layers", self.layers.map(|v| v.to_string()));
        push("dim", self.dim.map(|v| v.to_string()));
        push("lr", self.lr.map(|v| v.to_string()));
        push("alpha", self.alpha.map(|v| v.to_string()));
        push("epochs", self.epochs.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("estimator", self.estimator.clone());
        push("k", self.k.map(|v| v.to_string()));
        push("threads", self.threads.map(|v| v.to_string()));
        push("batch_size", self.batch_size.map(|v| v.to_string()));
        push("patience", self.patience.map(|v| v.to_string()));
        push("train_frac", self.train_frac.map(|v| v.to_string()));
        push("val_frac", self.val_frac.map(|v| v.to_string()));
        push("quantize", self.quantize.map(|v| v.to_string()));
        Ok(pairs)
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint directory written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Interaction file; defaults to the path recorded in the checkpoint
    #[arg(long)]
    data: Option<PathBuf>,
    /// Ranking cutoff; defaults to the checkpoint's k
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct ExportArgs {
    /// Checkpoint directory written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Expected bit width; must match the checkpoint when given
    #[arg(long)]
    bits: Option<u8>,
    /// Output directory for the code tables
    #[arg(long)]
    out: PathBuf,
    /// Interaction file; defaults to the path recorded in the checkpoint
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct RetrieveArgs {
    /// Directory holding users.hqcd and items.hqcd
    #[arg(long)]
    codes: PathBuf,
    /// Query user as a row of the user code table
    #[arg(long, group = "query")]
    user: Option<usize>,
    /// Query as a raw comma-separated code row
    #[arg(long, group = "query")]
    code_row: Option<String>,
    /// Number of items to return
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory holding users.hqcd and items.hqcd
    #[arg(long)]
    codes: PathBuf,
    /// Ranking cutoff per query
    #[arg(long, default_value_t = 50)]
    k: usize,
    /// Timing passes over every query; 0 skips the benchmark
    #[arg(long, default_value_t = 3)]
    reps: usize,
}

fn parse_code_row(raw: &str) -> Result<Vec<u16>, CliError> {
    raw.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u16>()
                .map_err(|_| CliError::usage(format!("bad code {tok:?} in --code-row")))
        })
        .collect()
}

fn run(cmd: Cmd) -> Result<String, CliError> {
    match cmd {
        Cmd::Train(args) => {
            let overrides = args.overrides()?;
            commands::cmd_train(args.config.as_deref(), &overrides)
        }
        Cmd::Eval(args) => commands::cmd_eval(&args.checkpoint, args.data.as_deref(), args.k),
        Cmd::Export(args) => {
            commands::cmd_export(&args.checkpoint, args.bits, &args.out, args.data.as_deref())
        }
        Cmd::Retrieve(args) => {
            let query = match (&args.user, &args.code_row) {
                (Some(id), None) => RetrieveQuery::User(*id),
                (None, Some(raw)) => RetrieveQuery::CodeRow(parse_code_row(raw)?),
                _ => return Err(CliError::usage("give exactly one of --user or --code-row")),
            };
            commands::cmd_retrieve(&args.codes, &query, args.k)
        }
        Cmd::Bench(args) => commands::cmd_bench(&args.codes, args.k, args.reps),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HQ_LOG", "error")).init();
    match run(cli.cmd) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
