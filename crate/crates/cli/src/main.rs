//! `curate`: command-line driver for headless runs.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Every failure prints
//! one `error: ...` line on stderr.

mod commands;
mod inputs;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "curate", version, about = "Adaptive curation rules: runs, summaries, ranking and the API server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where the corpus and its lexicons come from.
#[derive(Args, Clone)]
pub struct Sources {
    /// Corpus as JSON Lines (`{"id", "text", "created_at"?, "meta"?}` per line).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Lexicon directory (hypernyms.tsv, gazetteer.tsv, categories.json,
    /// embeddings.txt, stopwords.txt, lemmas.tsv). Defaults to a `lexicon`
    /// directory next to the corpus when one exists.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

/// Overrides of the adaptation settings; names follow the config file keys.
#[derive(Args, Clone, Default)]
pub struct AdaptFlags {
    /// Flat `key = value` settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub precision_threshold: Option<String>,
    /// Children per restriction and per node (K).
    #[arg(long, short = 'k')]
    pub children_cap: Option<String>,
    #[arg(long)]
    pub sample_rate: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long)]
    pub min_path_evidence: Option<String>,
    #[arg(long)]
    pub max_depth: Option<String>,
    /// Whether concept candidates are offered besides keywords.
    #[arg(long)]
    pub conceptual: Option<String>,
    #[arg(long)]
    pub cost_per_verdict: Option<String>,
    #[arg(long)]
    pub prior_alpha: Option<String>,
    #[arg(long)]
    pub prior_beta: Option<String>,
    /// Any setting as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Feedback {
    /// Verdicts from the ground-truth labels file.
    Oracle,
    /// Verdicts replayed from a `{"doc_id", "answer"}` JSON Lines file.
    Scripted,
}

// parsed once per process, so variant size does not matter
#[allow(clippy::large_enum_variant)]
#[derive(Subcommand)]
enum Command {
    /// Validate and index a corpus; writes ingest.json.
    Ingest {
        #[command(flatten)]
        sources: Sources,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build concept summaries; writes summaries.json.
    Summarize {
        #[command(flatten)]
        sources: Sources,
        /// Comma-separated kinds (topic, category, person, organization,
        /// location, keyword); all by default.
        #[arg(long)]
        kinds: Option<String>,
        #[arg(long, default_value_t = curation_core::summarize::DEFAULT_WEDGES)]
        wedges: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run adaptation rounds on a rule; writes one report per round, the
    /// final rule and run.json.
    Run {
        #[command(flatten)]
        sources: Sources,
        /// Rule file: a `tag: <label>` line followed by the expression.
        #[arg(long)]
        rule: PathBuf,
        #[arg(long, default_value_t = 5)]
        rounds: u32,
        #[arg(long, value_enum, default_value_t = Feedback::Oracle)]
        feedback: Feedback,
        /// Ground-truth labels (`{"id", "tag", "relevant"}` per line). Needed
        /// for oracle feedback; also enables full-corpus evaluation.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Scripted verdicts file.
        #[arg(long)]
        verdicts: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        adapt: AdaptFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank documents against a concept preference file.
    Rank {
        #[command(flatten)]
        sources: Sources,
        /// `{"concepts": [{"label", "members": [...], "weight"}]}`
        #[arg(long)]
        preference: PathBuf,
        #[arg(long, default_value_t = 20)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the per-round precision table of a run directory.
    Report {
        /// Output directory of `curate run`.
        dir: PathBuf,
        /// Print run.json instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Serve the HTTP API. Flags override CURATE_WORKSPACE and CURATE_PORT.
    Serve {
        #[arg(long)]
        workspace: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Generate a synthetic corpus with planted topics, labels, lexicon and
    /// a seed rule.
    Synth {
        #[arg(long, default_value_t = 50_000)]
        docs: usize,
        #[arg(long, default_value_t = 3)]
        topics: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Target precision of the seed rule.
        #[arg(long, default_value_t = 0.55)]
        seed_precision: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure and its exit code.
pub enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    pub fn data(e: impl std::fmt::Display) -> Self {
        Self::Data(e.to_string())
    }

    pub fn usage(e: impl std::fmt::Display) -> Self {
        Self::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{first}");
            return ExitCode::from(1);
        }
    };
    let out = match cli.command {
        Command::Ingest { sources, out, seed } => commands::ingest(&sources, out.as_deref(), seed),
        Command::Summarize { sources, kinds, wedges, out, seed } => {
            commands::summarize(&sources, kinds.as_deref(), wedges, out.as_deref(), seed)
        }
        Command::Run { sources, rule, rounds, feedback, labels, verdicts, seed, adapt, out } => {
            commands::run(commands::RunArgs { sources, rule, rounds, feedback, labels, verdicts, seed, adapt, out })
        }
        Command::Rank { sources, preference, top, out, seed } => {
            commands::rank(&sources, &preference, top, out.as_deref(), seed)
        }
        Command::Report { dir, json } => commands::report(&dir, json),
        Command::Serve { workspace, port } => commands::serve(workspace, port),
        Command::Synth { docs, topics, seed, seed_precision, out } => {
            commands::synth(docs, topics, seed, seed_precision, &out)
        }
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
