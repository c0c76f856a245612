//! `phish`: analysis, indexing, evaluation, cost modelling and the review
//! service behind one binary.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

mod cmd;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phish_core::eval::SweepAxis;

use setup::PipelineArgs;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] phish_core::Error),
    #[error(transparent)]
    Message(#[from] phish_core::message::MessageError),
    #[error(transparent)]
    Retrieval(#[from] phish_core::retrieval::RetrievalError),
    #[error(transparent)]
    Store(#[from] phish_service::StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Parser)]
#[command(name = "phish", version, about = "Two-phase phishing detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze messages from an .eml, .mbox or .jsonl file (`-` reads stdin).
    Analyze {
        input: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Skip retrieval and report the rule-based verdict.
        #[arg(long)]
        phase1_only: bool,
        /// Print explanation bullets under each verdict.
        #[arg(long)]
        explain: bool,
        /// Print one JSON analysis per line.
        #[arg(long)]
        json: bool,
    },
    /// Mask PII in a text file (`-` reads stdin).
    Redact {
        input: PathBuf,
        /// Print per-kind counts as JSON on stderr.
        #[arg(long)]
        counts: bool,
    },
    /// Build or query a retrieval index.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Evaluate the pipeline on a labeled JSONL corpus.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Directory for report.json, report.md, manifest.json and predictions.jsonl.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = phish_core::eval::DEFAULT_RESAMPLES)]
        resamples: usize,
        #[arg(long, default_value_t = phish_core::eval::DEFAULT_PERMUTATIONS)]
        permutations: usize,
        /// Evaluate one part of the stratified 70/15/15 split.
        #[arg(long, value_enum)]
        split: Option<cmd::SplitPart>,
        /// Also run the TF-IDF and zero-shot exposure baselines (needs the split).
        #[arg(long)]
        baselines: bool,
    },
    /// Sweep a decision threshold and report ROC/PR summaries.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long, value_enum, default_value = "phase1-score")]
        axis: AxisArg,
        /// Grid as lo:hi:n.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Leave-one-out rule ablation on a labeled corpus.
    Ablate {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Daily cost and ROI for the configured parameters and each mode.
    Roi {
        /// Cost parameters (TOML).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Operating-mode table (TOML).
        #[arg(long)]
        modes: Option<PathBuf>,
        #[arg(long)]
        recall: Option<f64>,
        #[arg(long)]
        fpr: Option<f64>,
        /// Print JSON instead of markdown.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the HTTP service (bearer token from PHISH_API_TOKEN).
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value = "phish-data")]
        data_dir: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Directory served for non-API paths.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = phish_service::DEFAULT_MAX_BODY)]
        max_body: usize,
        /// Events between snapshots.
        #[arg(long, default_value_t = 500)]
        snapshot_every: usize,
    },
    /// Groundedness of explanations with and without ontology context.
    GroundednessAb {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Number of flagged messages to sample.
        #[arg(long, default_value_t = 50)]
        sample: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum IndexAction {
    /// Redact and embed a JSONL corpus of known phishing.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = phish_core::retrieval::DEFAULT_DIMENSION)]
        dimension: usize,
        /// Accept benign items (the index is then marked mixed).
        #[arg(long)]
        allow_mixed: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Print the nearest neighbors of a text.
    Query {
        #[arg(long)]
        index: PathBuf,
        /// Text to look up; redacted before embedding.
        #[arg(long, conflicts_with = "file")]
        text: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long, default_value_t = phish_core::retrieval::DEFAULT_K)]
        k: usize,
        #[arg(long)]
        exact: bool,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum AxisArg {
    Phase1Score,
    RagSimilarity,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Phase1Score => SweepAxis::Phase1Score,
            AxisArg::RagSimilarity => SweepAxis::RagSimilarity,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { input, pipeline, phase1_only, explain, json } => {
            cmd::analyze(&input, &pipeline, phase1_only, explain, json)
        }
        Command::Redact { input, counts } => cmd::redact(&input, counts),
        Command::Index { action } => match action {
            IndexAction::Build { corpus, out, dimension, allow_mixed, seed } => {
                cmd::index_build(&corpus, &out, dimension, allow_mixed, seed)
            }
            IndexAction::Query { index, text, file, k, exact } => cmd::index_query(&index, text, file, k, exact),
        },
        Command::Evaluate { dataset, pipeline, report, jobs, seed, resamples, permutations, split, baselines } => {
            let opts = phish_core::eval::EvalOptions { jobs, resamples, permutations, seed };
            cmd::evaluate(&dataset, &pipeline, report.as_deref(), opts, split, baselines)
        }
        Command::Sweep { dataset, pipeline, axis, grid, report } => {
            cmd::sweep(&dataset, &pipeline, axis.into(), grid.as_deref(), report.as_deref())
        }
        Command::Ablate { dataset, pipeline, report } => cmd::ablate(&dataset, &pipeline, report.as_deref()),
        Command::Roi { params, modes, recall, fpr, json, report } => {
            cmd::roi(params.as_deref(), modes.as_deref(), recall, fpr, json, report.as_deref())
        }
        Command::Serve { addr, data_dir, pipeline, static_dir, max_body, snapshot_every } => {
            let mut cfg = phish_service::ServiceConfig::new(data_dir).with_env_token();
            cfg.static_dir = static_dir;
            cfg.max_body_bytes = max_body;
            cfg.store.snapshot_every = snapshot_every;
            cmd::serve(&addr, cfg, &pipeline)
        }
        Command::GroundednessAb { dataset, pipeline, sample, report } => {
            cmd::groundedness_ab(&dataset, &pipeline, sample, report.as_deref())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
