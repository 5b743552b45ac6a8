//! `guidedec`: compile constraints, decode under them, and evaluate
//! citation accuracy of chat models.

mod commands;
mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use guidedec::Backend;
use guidedec_eval::ExemplarMode;

/// Invalid invocation detected after argument parsing. Exits with 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "guidedec",
    version,
    about = "Guided decoding and citation evaluation"
)]
pub struct Cli {
    /// Print errors to stderr as one-line JSON objects.
    #[arg(long, global = true)]
    pub json_errors: bool,
    /// TOML settings file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log filter, e.g. `info` or `guidedec_eval=debug`.
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    /// Worker threads (default: one per logical core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compile a regex, grammar or JSON schema against a vocabulary.
    Compile(CompileArgs),
    /// Generate one output under a constraint.
    Decode(DecodeArgs),
    /// Score a dataset with a mock or remote model.
    Eval(EvalArgs),
    /// Render comparison tables from finished eval runs.
    Report(ReportArgs),
    /// Write a synthetic evaluation dataset.
    GenDataset(GenArgs),
}

#[derive(Args, Debug, Default)]
pub struct ConstraintArgs {
    #[arg(long, value_parser = parse_backend)]
    pub backend: Option<Backend>,
    #[arg(long, conflicts_with_all = ["grammar", "json_schema"])]
    pub regex: Option<String>,
    /// Grammar file.
    #[arg(long, value_name = "FILE", conflicts_with = "json_schema")]
    pub grammar: Option<PathBuf>,
    /// JSON-schema file.
    #[arg(long, value_name = "FILE")]
    pub json_schema: Option<PathBuf>,
    /// Vocabulary file (JSON: `{"eos_id": N, "tokens": [...]}`).
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
    /// Pushdown-engine mask cache: a capacity (0 disables) or `unbounded`.
    #[arg(long)]
    pub pda_cache: Option<String>,
    #[arg(long)]
    pub pda_max_configs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct CompileArgs {
    #[command(flatten)]
    pub constraint: ConstraintArgs,
    /// Output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub constraint: ConstraintArgs,
    /// Compiled regex index from `compile`.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["regex", "grammar", "json_schema"])]
    pub index: Option<PathBuf>,
    /// `mock:random:<seed>`, `mock:adversarial:<seed>` or `remote:<url>`.
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub temperature: Option<f32>,
    #[arg(long)]
    pub greedy: bool,
    /// Directory for the output and resolved settings; stdout only if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// JSON-Lines dataset.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=2))]
    pub turns: Option<u8>,
    /// `mock:planted[:correct=K][:wrong=W][:every=P]`, `mock:noisy:<seed>`,
    /// `remote` or `remote:<url>`.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_parser = parse_backend)]
    pub backend: Option<Backend>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `leading` or `grouped`.
    #[arg(long, value_parser = parse_exemplars)]
    pub exemplars: Option<ExemplarMode>,
    #[arg(long)]
    pub id_pattern: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub system_prompt_file: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    /// Chat-completions base URL for `remote` targets.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Request field carrying the guided-decoding backend name.
    #[arg(long)]
    pub hint_field: Option<String>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f32>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory searched recursively for eval runs.
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    /// Also write the tables to `<DIR>/report.md`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub refs_per_sample: Option<usize>,
    #[arg(long)]
    pub distractors: Option<usize>,
    #[arg(long)]
    pub pool_ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for `dataset.jsonl`; JSON Lines go to stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse()
}

fn parse_exemplars(s: &str) -> Result<ExemplarMode, String> {
    s.parse()
}

fn report_error(json: bool, kind: &str, code: u8, msg: &str) {
    if json {
        eprintln!(
            "{}",
            serde_json::json!({"error": {"kind": kind, "message": msg, "exit_code": code}})
        );
    } else {
        eprintln!("error: {msg}");
    }
}

/// The error and its causes joined by `: `, skipping causes that the
/// previous message already spells out.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let json = argv.iter().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            if json {
                report_error(true, "usage", 1, e.to_string().trim());
            } else {
                let _ = e.print();
            }
            return ExitCode::from(1);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let usage = e.downcast_ref::<UsageError>().is_some();
            let (kind, code) = if usage { ("usage", 1) } else { ("runtime", 2) };
            report_error(json, kind, code, &describe(&e));
            if usage && !json {
                eprintln!("\nFor more information, try '--help'.");
            }
            ExitCode::from(code)
        }
    }
}
