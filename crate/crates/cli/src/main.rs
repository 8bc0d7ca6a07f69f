//! `icdlink`: validate assets, annotate with a reference scorer, evaluate.

mod commands;
mod error;
mod scorer_spec;

use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use icdlink::corpus::DEFAULT_TRUNCATION;

use crate::error::CliError;
use crate::scorer_spec::ScorerSpec;

#[derive(Debug, Parser)]
#[command(name = "icdlink", version, about = "Constrained ICD-10 entity linking and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Knowledge base checks.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Corpus checks and statistics.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Annotate every document of a corpus and write predictions JSONL.
    Annotate(AnnotateArgs),
    /// Score predictions against a gold corpus.
    Eval(EvalArgs),
}

#[derive(Debug, Subcommand)]
enum KbCommand {
    /// Load and validate a knowledge base TSV.
    Validate {
        #[arg(long)]
        kb: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum CorpusCommand {
    /// Load and validate a corpus JSONL, optionally against a knowledge base.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        /// Also check that every gold code exists in this knowledge base.
        #[arg(long)]
        kb: Option<PathBuf>,
    },
    /// Sample and code counts, with few-shot counts when training data is given.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        train_corpus: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// oracle, random[:seed] or ngram[:n].
    #[arg(long, default_value = "oracle")]
    pub scorer: String,
    /// Training corpus for the n-gram scorer.
    #[arg(long)]
    pub train_corpus: Option<PathBuf>,
    /// Seed for `random` without an explicit parameter.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = NonZeroUsize::new(DEFAULT_TRUNCATION).unwrap())]
    pub truncate: NonZeroUsize,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<NonZeroUsize>,
    /// Predictions file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub kb: PathBuf,
    /// Gold corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Enables the few-shot rows.
    #[arg(long)]
    pub train_corpus: Option<PathBuf>,
    /// Must match the limit used at annotation time.
    #[arg(long, default_value_t = NonZeroUsize::new(DEFAULT_TRUNCATION).unwrap())]
    pub truncate: NonZeroUsize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Kb(KbCommand::Validate { kb }) => commands::kb_validate(&kb),
        Command::Corpus(CorpusCommand::Validate { corpus, kb }) => commands::corpus_validate(&corpus, kb.as_deref()),
        Command::Corpus(CorpusCommand::Stats {
            corpus,
            train_corpus,
            format,
            out,
        }) => commands::corpus_stats(&corpus, train_corpus.as_deref(), format, out.as_deref()),
        Command::Annotate(args) => {
            let spec: ScorerSpec = args.scorer.parse().map_err(|e| CliError::Usage(format!("--scorer: {e}")))?;
            commands::annotate(&args, spec)
        }
        Command::Eval(args) => commands::eval(&args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ICDLINK_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(64) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
