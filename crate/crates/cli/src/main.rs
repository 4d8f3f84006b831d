//! `vwsd`: rank candidate images for ambiguous phrases.
//!
//! Each subcommand wraps one pipeline stage and reads or writes files, so a
//! run can stop after any stage and resume later. `rank` runs the whole
//! flow in one go. Image and word frequency statistics are always computed
//! over the dataset file given to the command.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Overrides;

#[derive(Debug, Parser)]
#[command(
    name = "vwsd",
    version,
    about = "Visual word sense disambiguation ranking engine"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the BM25 article index from a corpus
    BuildIndex {
        /// Index file to write (defaults to the configured index path)
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Expand every context with the names of its selected sense
    Expand {
        /// Output file (JSONL); stdout when omitted
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Print only the expanded context strings
        #[arg(long)]
        text: bool,
    },
    /// Score candidates by penalty-adjusted similarity
    Score {
        #[arg(long, default_value = "original")]
        preset: String,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Score candidates against images of retrieved articles
    Retrieve {
        #[arg(long, default_value = "original")]
        preset: String,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Build the per-candidate feature table
    ExtractFeatures {
        /// Scores written by `score`
        #[arg(long, value_name = "FILE")]
        scores: PathBuf,
        /// Retrieval scores written by `retrieve`; columns G-K are zero without it
        #[arg(long, value_name = "FILE")]
        retrieval: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Train the ranking model on a labeled feature table
    Train {
        #[arg(long, value_name = "FILE")]
        features: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Train without the retrieval columns G-K
        #[arg(long)]
        drop_wiki: bool,
        /// Number of trees (overrides the config)
        #[arg(long)]
        trees: Option<usize>,
    },
    /// Run the full flow and write rankings
    Rank {
        #[arg(long, default_value = "original")]
        preset: String,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Resume from scores written by `score`
        #[arg(long, value_name = "FILE")]
        scores: Option<PathBuf>,
        /// Resume from retrieval scores written by `retrieve`
        #[arg(long, value_name = "FILE")]
        retrieval: Option<PathBuf>,
    },
    /// Accuracy and MRR of a rankings file
    Evaluate {
        #[arg(long, value_name = "FILE")]
        rankings: PathBuf,
    },
    /// Run component ablations and report accuracy and MRR for each
    Ablate {
        /// Comma-separated preset names; all presets when omitted
        #[arg(long, value_delimiter = ',')]
        configs: Vec<String>,
        /// TSV report path
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Write a synthetic world with a matching run configuration
    GenFixture {
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
}

/// A failed command: exit code plus a one-line diagnostic.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    kind: String,
    message: String,
}

impl Failure {
    pub fn input(kind: &str, message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn internal(kind: &str, message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            kind: kind.into(),
            message: message.into(),
        }
    }
}

impl From<vwsd::Error> for Failure {
    fn from(e: vwsd::Error) -> Self {
        Failure::input(e.kind(), e.to_string())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let message = serde_json::to_string(&self.message).unwrap_or_default();
        write!(
            f,
            "error kind={} code={} message={message}",
            self.kind, self.code
        )
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.overrides.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::internal("threads", e.to_string()))?;
    }
    let settings = config::Settings::resolve(&cli.overrides)?;
    match cli.command {
        Command::BuildIndex { out } => commands::build_index(&settings, out),
        Command::Expand { out, text } => commands::expand(&settings, out, text),
        Command::Score { preset, out } => commands::score(&settings, &preset, &out),
        Command::Retrieve { preset, out } => commands::retrieve(&settings, &preset, &out),
        Command::ExtractFeatures {
            scores,
            retrieval,
            out,
        } => commands::extract_features(&settings, &scores, retrieval.as_deref(), &out),
        Command::Train {
            features,
            out,
            drop_wiki,
            trees,
        } => commands::train(&settings, &features, &out, drop_wiki, trees),
        Command::Rank {
            preset,
            out,
            scores,
            retrieval,
        } => commands::rank(
            &settings,
            &preset,
            &out,
            scores.as_deref(),
            retrieval.as_deref(),
        ),
        Command::Evaluate { rankings } => commands::evaluate(&settings, &rankings),
        Command::Ablate { configs, out } => commands::ablate(&settings, &configs, out.as_deref()),
        Command::GenFixture { out_dir, samples } => {
            commands::gen_fixture(&settings, &out_dir, samples)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = std::panic::catch_unwind(|| run(cli))
        .unwrap_or_else(|_| Err(Failure::internal("panic", "internal error")));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code)
        }
    }
}
