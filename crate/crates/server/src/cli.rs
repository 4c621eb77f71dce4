use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use surveystat_core::defaults::{self, DefaultKind};
use surveystat_core::report::{self, compose_at, filter_by_level, BlockOutcome};
use surveystat_core::survey::{create_questionnaire, DefinitionError, TokenClass};
use surveystat_core::{ReportSpec, Store, StoreError};
use thiserror::Error;

use crate::config::{ConfigError, ServiceConfig, TransportConfig};

const DEFAULT_STORE: &str = "surveystat-data";

#[derive(Debug, Parser)]
#[command(name = "surveystat", version, about = "Real-time survey statistics service and operator tools")]
pub struct Cli {
    /// Store root directory [default: ./surveystat-data]
    #[arg(long, global = true, env = "SURVEYSTAT_STORE")]
    pub store: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Store a questionnaire from a TOML definition file; prints its id.
    Create { file: PathBuf },
    /// Issue access tokens; prints `token,questionnaire,level` per line.
    Tokens {
        questionnaire: String,
        #[arg(long, short = 'n')]
        count: usize,
        #[arg(long, default_value_t = 0)]
        level: u32,
        /// Reusable report-viewing tokens instead of single-use respondent ones.
        #[arg(long)]
        viewer: bool,
    },
    /// Install a bundled example with its report spec; prints its id.
    ImportDefault {
        #[arg(value_enum)]
        example: Example,
        #[arg(long)]
        overwrite: bool,
    },
    /// Write a report (report.json plus one SVG per chart) to a directory.
    ExportReport {
        /// Report spec id, or a questionnaire id for its default report.
        spec: String,
        #[arg(long, default_value_t = 0)]
        level: u32,
        #[arg(long)]
        out: PathBuf,
        /// Pin the response snapshot instead of using the latest.
        #[arg(long)]
        at_version: Option<u64>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<SocketAddr>,
        #[arg(long, value_enum)]
        transport: Option<TransportKind>,
        #[arg(long)]
        gateway_url: Option<String>,
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Example {
    Event,
    Spc,
    Pca,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TransportKind {
    Disabled,
    Capture,
    Gateway,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("io: {0}")]
    Io(String),
    #[error("definition: {0}")]
    Definition(#[from] DefinitionError),
    #[error("exists: {0}")]
    Exists(String),
    #[error("not-found: {0}")]
    NotFound(String),
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("store: {0}")]
    Store(String),
    #[error("report: {0}")]
    Report(String),
    #[error("serve: {0}")]
    Serve(String),
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::Exists { .. } => CliError::Exists(message),
            StoreError::UnknownQuestionnaire(_) | StoreError::UnknownDataset(_) | StoreError::UnknownReportSpec(_) => {
                CliError::NotFound(message)
            }
            StoreError::Definition(d) => CliError::Definition(d),
            StoreError::InvalidTokenCount | StoreError::InvalidId(_) | StoreError::VersionAhead { .. } => {
                CliError::Invalid(message)
            }
            _ => CliError::Store(message),
        }
    }
}

impl From<report::ReportError> for CliError {
    fn from(e: report::ReportError) -> Self {
        match e {
            report::ReportError::Store(s) => s.into(),
            other => CliError::Report(other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    if e.kind() == std::io::ErrorKind::NotFound {
        CliError::Io(format!("no such file: {}", path.display()))
    } else {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

/// Runs one invocation, writing results to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let store_root = cli.store.clone();
    let open = || Store::open(store_root.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_STORE)));
    let w = |out: &mut dyn std::io::Write, line: &str| writeln!(out, "{line}").map_err(|e| CliError::Io(e.to_string()));

    match cli.command {
        Command::Create { file } => {
            let text = std::fs::read_to_string(&file).map_err(|e| io_error(&file, e))?;
            let q = create_questionnaire(&text)?;
            let id = open()?.store_questionnaire(&q)?;
            w(out, &id)?;
        }
        Command::Tokens {
            questionnaire,
            count,
            level,
            viewer,
        } => {
            let class = if viewer { TokenClass::Viewer } else { TokenClass::Respondent };
            let tokens = open()?.issue_tokens(&questionnaire, count, level, class)?;
            let mut text = String::with_capacity(tokens.len() * 48);
            for t in &tokens {
                text.push_str(&format!("{},{},{}\n", t.as_str(), questionnaire, level));
            }
            out.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
        }
        Command::ImportDefault { example, overwrite } => {
            let kind = match example {
                Example::Event => DefaultKind::Event,
                Example::Spc => DefaultKind::Spc,
                Example::Pca => DefaultKind::Pca,
            };
            let id = defaults::install(&open()?, kind, overwrite)?;
            w(out, &id)?;
        }
        Command::ExportReport {
            spec,
            level,
            out: dir,
            at_version,
        } => {
            let store = open()?;
            let spec = resolve_spec(&store, &spec)?;
            let report = filter_by_level(&compose_at(&store, &spec, at_version)?, level);
            std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
            let mut written = vec![dir.join("report.json")];
            std::fs::write(&written[0], report.to_json()).map_err(|e| io_error(&written[0], e))?;
            for block in &report.blocks {
                if let BlockOutcome::Ok { charts, .. } = &block.outcome {
                    for chart in charts {
                        let path = dir.join(format!("{}-{}.svg", block.index, chart.name));
                        std::fs::write(&path, &chart.svg).map_err(|e| io_error(&path, e))?;
                        written.push(path);
                    }
                }
            }
            for p in written {
                w(out, &p.display().to_string())?;
            }
        }
        Command::Serve {
            config,
            bind,
            transport,
            gateway_url,
            static_dir,
        } => {
            let mut cfg = match &config {
                Some(path) => ServiceConfig::from_file(path)?,
                None => ServiceConfig::default(),
            };
            if let Some(root) = store_root {
                cfg.store = root;
            }
            if let Some(b) = bind {
                cfg.bind = b;
            }
            if let Some(dir) = static_dir {
                cfg.static_dir = Some(dir);
            }
            match (transport, gateway_url) {
                (Some(TransportKind::Disabled), _) => cfg.transport = TransportConfig::Disabled,
                (Some(TransportKind::Capture), _) => cfg.transport = TransportConfig::Capture,
                (Some(TransportKind::Gateway), Some(endpoint)) | (None, Some(endpoint)) => {
                    cfg.transport = TransportConfig::Gateway { endpoint }
                }
                (Some(TransportKind::Gateway), None) => {
                    if !matches!(cfg.transport, TransportConfig::Gateway { .. }) {
                        return Err(CliError::Invalid("--transport gateway needs --gateway-url".into()));
                    }
                }
                (None, None) => {}
            }
            crate::serve(cfg).map_err(|e| CliError::Serve(format!("{e:#}")))?;
        }
    }
    Ok(())
}

/// A stored spec, or the default report of the questionnaire with that id.
fn resolve_spec(store: &Store, id: &str) -> Result<ReportSpec, CliError> {
    match store.load_report_spec(id) {
        Ok(spec) => Ok(spec),
        Err(StoreError::UnknownReportSpec(_)) => match store.load_questionnaire(id) {
            Ok(q) => Ok(report::spec_for_questionnaire(store, &q)?),
            Err(StoreError::UnknownQuestionnaire(_)) => Err(CliError::NotFound(format!("unknown report spec {id:?}"))),
            Err(e) => Err(e.into()),
        },
        Err(e) => Err(e.into()),
    }
}
