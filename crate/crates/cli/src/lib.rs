//! Command-line front-end: argument parsing, config resolution and exit codes.
//! Each subcommand lives in [`stages`] and reads and writes artifacts in the
//! output directory.

pub mod config;
pub mod manifest;
pub mod stages;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{RunConfig, TopicRange, CONFIG_ENV};
pub use stages::{run_subcommand, SUBCOMMANDS};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

impl From<bundle_miner::Error> for CliError {
    fn from(e: bundle_miner::Error) -> Self {
        match e {
            bundle_miner::Error::Invariant(_) => CliError::Invariant(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bundle-miner", version, about = "Discover condition clusters that share clinical workflow topics")]
pub struct Cli {
    /// Flat `key = value` config file (falls back to $BUNDLE_MINER_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub events: Option<String>,
    #[arg(long, global = true)]
    pub diagnoses: Option<String>,
    #[arg(long, global = true)]
    pub codemap: Option<String>,
    #[arg(long, global = true)]
    pub responses: Option<String>,
    /// Output directory for all artifacts.
    #[arg(long = "out", global = true)]
    pub out_dir: Option<String>,
    #[arg(long, global = true)]
    pub k_range: Option<String>,
    #[arg(long, global = true)]
    pub q_range: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    #[arg(long, global = true)]
    pub iterations: Option<String>,
    #[arg(long, global = true)]
    pub weight_threshold: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Parse the event log and diagnoses; write sequences and the phenotype matrix.
    Ingest,
    /// Mine frequent subsequences; write the workflow matrix.
    Mine,
    /// Sweep topic counts for both corpora.
    SelectK,
    /// Fit the workflow and phenotype topic models at the chosen counts.
    FitTopics,
    /// Workflow x phenotype association matrix.
    Associate,
    /// Modularity clustering of the topic graph.
    Cluster,
    /// Report JSON, text summary, topic tables and workflow DOT graphs.
    Report,
    /// Generate a planted synthetic corpus.
    Synth,
    /// One-way ANOVA of survey responses and random counterpart clusters.
    EvalSurvey,
    /// Run ingest through report.
    Pipeline,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Mine => "mine",
            Command::SelectK => "select-k",
            Command::FitTopics => "fit-topics",
            Command::Associate => "associate",
            Command::Cluster => "cluster",
            Command::Report => "report",
            Command::Synth => "synth",
            Command::EvalSurvey => "eval-survey",
            Command::Pipeline => "pipeline",
        }
    }
}

impl Cli {
    /// Flag values as config overrides; `--set` entries come first so the
    /// dedicated flags win.
    pub fn overrides(&self) -> Result<BTreeMap<String, String>, CliError> {
        let mut out = BTreeMap::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
        for (k, v) in [
            ("events", &self.events),
            ("diagnoses", &self.diagnoses),
            ("codemap", &self.codemap),
            ("responses", &self.responses),
            ("out_dir", &self.out_dir),
            ("k_range", &self.k_range),
            ("q_range", &self.q_range),
            ("seed", &self.seed),
            ("iterations", &self.iterations),
            ("weight_threshold", &self.weight_threshold),
        ] {
            if let Some(v) = v {
                out.insert(k.to_string(), v.clone());
            }
        }
        Ok(out)
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let path = self
            .config
            .clone()
            .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
        let file = match path {
            Some(p) => config::load_file(&p)?,
            None => BTreeMap::new(),
        };
        RunConfig::resolve(&file, &self.overrides()?)
    }
}

/// Parses `args`, runs the subcommand and returns the process exit code.
/// Artifact paths (and the summary, for `report`/`pipeline`) go to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    let outcome = cli
        .resolve()
        .and_then(|cfg| run_subcommand(cli.command.name(), &cfg));
    match outcome {
        Ok(out) => {
            if !out.summary.is_empty() {
                let _ = stdout.write_all(out.summary.as_bytes());
            }
            for p in &out.artifacts {
                let _ = writeln!(stdout, "{}", p.display());
            }
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "bundle-miner {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
