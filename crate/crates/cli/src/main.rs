mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Backend;

/// Merge-request deviation detection and review-time impact analysis.
///
/// Every relative input and output path is resolved against the output
/// directory (`--out`, else `out_dir` from the config, else the current
/// directory). The forge token is read from the MRSCOPE_TOKEN environment
/// variable.
#[derive(Debug, Parser)]
#[command(name = "mrscope", version, max_term_width = 100)]
pub struct Cli {
    /// Run configuration file (TOML)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory all artifact paths are relative to
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Log progress to stderr
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch merge requests from the forge into corpus.jsonl
    Ingest(IngestArgs),
    /// Compute an annotation sample size and write an annotation template
    Sample(SampleArgs),
    /// Run the rule-based deviation detector
    Detect(DetectArgs),
    /// Import manual annotations or measure agreement between annotators
    #[command(subcommand)]
    Annotate(AnnotateCommand),
    /// Label MRs with the rules or an external classification service
    Classify(ClassifyArgs),
    /// Export deviation and completion-time feature tables
    Features(FeaturesArgs),
    /// Compare completion-time models trained with and without deviations
    Impact(ImpactArgs),
    /// Render prevalence charts, the impact table and classifier summaries
    Report(ReportArgs),
    /// Generate a synthetic corpus
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Forge base URL, e.g. https://gitlab.example.com
    #[arg(long, value_name = "URL")]
    pub host: Option<String>,
    /// Group name recorded in the corpus
    #[arg(long)]
    pub group: Option<String>,
    /// Project id to fetch (repeatable)
    #[arg(long = "project", value_name = "ID")]
    pub projects: Vec<u64>,
    /// Only fetch MRs updated after this RFC 3339 instant and merge them
    /// into the existing corpus
    #[arg(long, value_name = "TIME")]
    pub since: Option<String>,
    /// Corpus archive to write
    #[arg(long, value_name = "FILE", default_value = "corpus.jsonl")]
    pub corpus: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Size a sample for a population of N MRs instead of reading a corpus;
    /// the template then lists 1-based positions
    #[arg(long, value_name = "N")]
    pub population: Option<u64>,
    /// Draw exactly this many MRs instead of the computed size
    #[arg(long, value_name = "N")]
    pub size: Option<u64>,
    /// Sampling seed (overrides sampling.seed)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Corpus archive to sample from
    #[arg(long, value_name = "FILE", default_value = "corpus.jsonl")]
    pub corpus: PathBuf,
    /// Annotation template to write
    #[arg(long, value_name = "FILE", default_value = "annotation_template.csv")]
    pub template: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Corpus archive to scan
    #[arg(long, value_name = "FILE", default_value = "corpus.jsonl")]
    pub corpus: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum AnnotateCommand {
    /// Validate annotation CSVs and store them under annotations/
    Import {
        /// Annotation files (mr_id,url,label,note); the file stem names the annotator
        #[arg(required = true, value_name = "FILE")]
        files: Vec<PathBuf>,
    },
    /// Inter-annotator agreement between two annotation files
    Diff {
        #[arg(value_name = "FIRST")]
        first: PathBuf,
        #[arg(value_name = "SECOND")]
        second: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Labeling backend (overrides classifier.backend)
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    /// Corpus archive to label
    #[arg(long, value_name = "FILE", default_value = "corpus.jsonl")]
    pub corpus: PathBuf,
    /// Service program and arguments (overrides classifier.command)
    #[arg(last = true, value_name = "COMMAND")]
    pub command: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Corpus archive to read
    #[arg(long, value_name = "FILE", default_value = "corpus.jsonl")]
    pub corpus: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImpactArgs {
    /// Corpus archive to read
    #[arg(long, value_name = "FILE", default_value = "corpus.jsonl")]
    pub corpus: PathBuf,
    /// Verdicts from `detect` or `classify`
    #[arg(long, value_name = "FILE", default_value = "verdicts.jsonl")]
    pub verdicts: PathBuf,
    /// Use 100 bootstrap iterations
    #[arg(long, conflicts_with = "n_boot")]
    pub full: bool,
    /// Bootstrap iterations (overrides impact.n_boot)
    #[arg(long, value_name = "N")]
    pub n_boot: Option<usize>,
    /// Base seed (overrides impact.seed)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also compare models trained on deviation MRs only and regular MRs only
    #[arg(long)]
    pub interpretation: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Corpus archive to read
    #[arg(long, value_name = "FILE", default_value = "corpus.jsonl")]
    pub corpus: PathBuf,
    /// Verdicts from `detect` or `classify`
    #[arg(long, value_name = "FILE", default_value = "verdicts.jsonl")]
    pub verdicts: PathBuf,
    /// Impact report from `impact`; skipped when absent
    #[arg(long, value_name = "FILE", default_value = "impact.json")]
    pub impact: PathBuf,
    /// Classifier evaluation records (method,param,iteration,accuracy,precision,recall,f1)
    #[arg(long, value_name = "FILE")]
    pub eval: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    /// Regular MRs plus MRs that satisfy exactly one detection rule
    Injected,
    /// Regular MRs plus deviation MRs with off-distribution completion times
    Impact,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Corpus shape
    #[arg(long, value_enum, default_value = "injected")]
    pub kind: SynthKind,
    /// Regular MRs
    #[arg(long, value_name = "N", default_value_t = 700)]
    pub normal: usize,
    /// MRs per injected category (injected) or deviation MRs in total (impact)
    #[arg(long, value_name = "N", default_value_t = 50)]
    pub deviations: usize,
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corpus archive to write
    #[arg(long, value_name = "FILE", default_value = "corpus.jsonl")]
    pub corpus: PathBuf,
}

fn exit_code(class: &str) -> u8 {
    match class {
        "config" => 2,
        "credential" | "rate_limit" | "incomplete" | "http" | "network" => 4,
        "insufficient_data" => 5,
        _ => 3,
    }
}

fn fail(class: &str, msg: &str) -> ExitCode {
    let msg = msg.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("mrscope: error[{class}]: {msg}");
    ExitCode::from(if class == "usage" { 2 } else { exit_code(class) })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("").trim_start_matches("error: ");
            return fail("usage", first);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.class(), &e.to_string()),
    }
}
