//! The `cfuqc` command line.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use cfuqc_core::config::PipelineConfig;
use cfuqc_core::orchestrator::{Orchestrator, StateKind, Submission};
use cfuqc_core::registry::{synthetic_training_set, train_and_promote, CandidateId};
use cfuqc_core::store::Store;
use cfuqc_core::synthgen::{generate_batch, plan_batch, BatchPlan, Manifest, Sidecar, MANIFEST_FILE};
use cfuqc_core::{Error, ErrorCode};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::api::{router, AppState};

pub const DEFAULT_STORE: &str = "cfuqc-store";
pub const DEFAULT_RUN: &str = "default";

#[derive(Debug, Parser)]
#[command(name = "cfuqc", version, about = "Colony counting QC pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a batch of synthetic plates with a manifest.
    Gen(GenArgs),
    /// Submit and process every plate of a manifest.
    Run(RunArgs),
    /// Print detection, screening and count-validation tables.
    Report(ReportArgs),
    /// Check the audit hash chain.
    VerifyAudit(StoreArgs),
    /// Write the QM export of a finished run.
    Export(ExportArgs),
    /// Train the classifier candidates and promote the best.
    Promote(PromoteArgs),
    /// Start the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct StoreArgs {
    /// Store directory.
    #[arg(long, default_value = DEFAULT_STORE)]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    /// Pipeline configuration file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Consensus tolerance; overrides the config file.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    /// Share of plates given a disqualifying artifact.
    #[arg(long, default_value_t = 0.0)]
    pub invalid_frac: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = DEFAULT_RUN)]
    pub run_id: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    /// Restrict to one run.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Print JSON instead of text tables.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    #[arg(long, default_value = DEFAULT_RUN)]
    pub run_id: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PromoteArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Synthetic plates to harvest training colonies from.
    #[arg(long, default_value_t = 20)]
    pub plates: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Bearer token required on mutating requests.
    #[arg(long, env = "CFUQC_TOKEN", hide_env_values = true)]
    pub token: String,
    /// Where POST /export writes; defaults to `<store>/exports`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input; exit 2.
    Usage(String),
    /// Anything else; exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e.code() {
            ErrorCode::Validation => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn print_json<T: Serialize>(value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn pipeline_config(args: &PipelineArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| match e {
            Error::Io(io) => CliError::Usage(format!("cannot read {}: {io}", p.display())),
            other => other.into(),
        })?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = args.delta {
        cfg.delta = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run_manifest(a),
        Command::Report(a) => report(a),
        Command::VerifyAudit(a) => verify_audit(a),
        Command::Export(a) => export(a),
        Command::Promote(a) => promote(a),
        Command::Serve(a) => serve(a),
    }
}

#[derive(Serialize)]
struct GenSummary {
    plates: usize,
    invalid: usize,
    manifest: PathBuf,
}

fn gen(a: GenArgs) -> CliResult {
    let entries = plan_batch(&BatchPlan::new(a.seed, a.count, a.invalid_frac))?;
    let manifest = generate_batch(&entries, &a.out)?;
    print_json(&GenSummary {
        plates: manifest.entries.len(),
        invalid: manifest.invalid_count(),
        manifest: a.out.join(MANIFEST_FILE),
    })
}

fn run_manifest(a: RunArgs) -> CliResult {
    let cfg = pipeline_config(&a.pipeline)?;
    let manifest = Manifest::load(&a.manifest).map_err(|e| match e {
        Error::Io(io) => CliError::Usage(format!("cannot read {}: {io}", a.manifest.display())),
        Error::Json(j) => CliError::Usage(format!("{} is not a manifest: {j}", a.manifest.display())),
        other => other.into(),
    })?;
    let o = Orchestrator::open(&a.pipeline.store.store, cfg)?;
    o.open_run(&a.run_id)?;
    for entry in &manifest.entries {
        let png = fs::read(manifest.resolve(&a.manifest, &entry.image))?;
        let sidecar: Sidecar = serde_json::from_slice(&fs::read(manifest.resolve(&a.manifest, &entry.ground_truth))?)
            .map_err(|e| CliError::Usage(format!("sidecar of {}: {e}", entry.plate_id)))?;
        let sub = Submission {
            run_id: Some(a.run_id.clone()),
            label: Some(entry.plate_id.clone()),
            ground_truth: Some(sidecar.ground_truth),
        };
        let (rec, _) = o.submit_plate(&png, sub)?;
        if o.plate(&rec.plate_id)?.state == StateKind::Received {
            o.process_plate(&rec.plate_id)?;
        }
    }
    print_json(&o.run_stats(&a.run_id)?)
}

fn open_existing(store: &Path) -> Result<Orchestrator, CliError> {
    Ok(Orchestrator::open(store, PipelineConfig::default())?)
}

fn report(a: ReportArgs) -> CliResult {
    let o = open_existing(&a.store.store)?;
    let r = match &a.run_id {
        Some(run) => o.run_report(run)?,
        None => o.store_report()?,
    };
    if a.json {
        print_json(&r)
    } else {
        print!("{}", r.render_text());
        Ok(())
    }
}

fn verify_audit(a: StoreArgs) -> CliResult {
    let store = Store::open(&a.store)?;
    let r = store.verify_audit()?;
    let mut v = serde_json::to_value(&r).map_err(|e| CliError::Runtime(e.to_string()))?;
    v["fault"] = serde_json::json!(store.fault());
    print_json(&v)?;
    if r.ok && !r.count_mismatch && store.fault().is_none() {
        Ok(())
    } else {
        Err(CliError::Runtime("audit log failed verification".into()))
    }
}

fn export(a: ExportArgs) -> CliResult {
    let o = open_existing(&a.store.store)?;
    print_json(&o.export_qm(&a.run_id, &a.out)?)
}

fn promote(a: PromoteArgs) -> CliResult {
    let o = open_existing(&a.store.store)?;
    let data = synthetic_training_set(a.seed, a.plates)?;
    let (reports, record) = train_and_promote(&data, &CandidateId::ALL, a.seed, chrono::Utc::now())?;
    o.record_promotion(record.clone())?;
    print_json(&serde_json::json!({
        "promoted": record.candidate_id,
        "reason": record.reason,
        "candidates": reports,
    }))
}

fn serve(a: ServeArgs) -> CliResult {
    if a.token.trim().is_empty() {
        return Err(CliError::Usage("--token must not be empty".into()));
    }
    let cfg = pipeline_config(&a.pipeline)?;
    let store = a.pipeline.store.store.clone();
    let o = Orchestrator::open(&store, cfg)?;
    let export_dir = a.out.unwrap_or_else(|| store.join("exports"));
    let app = router(AppState::new(o, Some(a.token), export_dir));
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}
