//! Command-line front end: dataset ingestion, training runs, diagnostics and
//! result files.

pub mod commands;
pub mod settings;

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use qgcn_core::analysis::AnalysisError;
use qgcn_core::io::IoError;
use qgcn_core::trainer::{Task, TrainError};
use qgcn_core::GeomError;

use settings::{parse_config, Settings, SEED_ENV};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Train(_) => "train",
            CliError::Geometry(_) => "geometry",
            CliError::Analysis(_) => "analysis",
            CliError::CheckFailed(_) => "check_failed",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }

    /// One-line JSON record for machine consumption.
    pub fn record(&self) -> String {
        #[derive(Serialize)]
        struct Inner<'a> {
            kind: &'a str,
            message: String,
        }
        #[derive(Serialize)]
        struct Record<'a> {
            error: Inner<'a>,
        }
        serde_json::to_string(&Record {
            error: Inner {
                kind: self.kind(),
                message: self.to_string(),
            },
        })
        .expect("error record serialises")
    }
}

#[derive(Debug, Parser)]
#[command(name = "qgcn", version, about = "Pseudo-Riemannian graph convolutional networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a graph reconstruction model and report mAP.
    Reconstruct(RunArgs),
    /// Train a link prediction model and report ROC-AUC.
    Linkpred(RunArgs),
    /// Train a node classifier and report F1.
    Nodeclass(RunArgs),
    /// Sectional curvature and δ-hyperbolicity of a graph.
    Analyze(RunArgs),
    /// Run the geometry invariant checks.
    Geomcheck(RunArgs),
    /// Write node embeddings of a checkpoint (or of a fresh reconstruction run).
    ExportEmbeddings(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Whitespace-separated edge list, one `u v` pair per line.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Node feature CSV, one row per node.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Label CSV with `id,label` rows.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Manifold signature `s,t`.
    #[arg(long, allow_hyphen_values = true)]
    pub signature: Option<String>,
    /// Initial curvature (negative).
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// File of `key=value` settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "qgcn-out")]
    pub out: PathBuf,
    /// Checkpoint to export, or to warm-start node classification from.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Sample count for analysis and geometry checks.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Dataset name, used to show published reference values.
    #[arg(long)]
    pub dataset: Option<String>,
}

impl RunArgs {
    /// Config file values overlaid with flags, then the seed environment variable.
    pub fn merged(&self) -> Result<BTreeMap<String, String>, CliError> {
        let mut map = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| IoError::Read {
                    path: p.clone(),
                    source,
                })?;
                parse_config(&text, p)?
            }
            None => BTreeMap::new(),
        };
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        put("signature", self.signature.clone());
        put("beta", self.beta.map(|v| v.to_string()));
        put("layers", self.layers.map(|v| v.to_string()));
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("samples", self.samples.map(|v| v.to_string()));
        put("dataset", self.dataset.clone());
        put("checkpoint", self.checkpoint.as_ref().map(|p| p.display().to_string()));
        if let Ok(seed) = std::env::var(SEED_ENV) {
            let seed = seed.trim();
            if seed.parse::<u64>().is_err() {
                return Err(CliError::Config(format!("{SEED_ENV} must be an unsigned integer, got {seed:?}")));
            }
            map.insert("seed".into(), seed.to_string());
        }
        Ok(map)
    }

    pub fn settings(&self, task: Task) -> Result<Settings, CliError> {
        Settings::from_map(task, &self.merged()?)
    }

    pub fn edges(&self) -> Result<&PathBuf, CliError> {
        self.edges
            .as_ref()
            .ok_or_else(|| CliError::Usage("--edges is required".into()))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("");
            return Err(CliError::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    match &cli.command {
        Command::Reconstruct(a) => commands::train_command(a, Task::Reconstruct),
        Command::Linkpred(a) => commands::train_command(a, Task::LinkPred),
        Command::Nodeclass(a) => commands::train_command(a, Task::NodeClass),
        Command::Analyze(a) => commands::analyze(a),
        Command::Geomcheck(a) => commands::geomcheck(a),
        Command::ExportEmbeddings(a) => commands::export_embeddings(a),
    }
}
