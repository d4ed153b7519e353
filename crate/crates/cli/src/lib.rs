//! `recpipe` command-line front end.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use recpipe::explore::DesignSpace;

use crate::commands::Outcome;

#[derive(Debug, Parser)]
#[command(name = "recpipe", version, about = "Quality and performance co-modeling of recommendation funnels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run config or catalog JSON, or `default`.
    #[arg(long, default_value = "default")]
    pub config: String,
    #[arg(long, env = "RECPIPE_SEED")]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo NDCG of pipelines.
    Quality(Common),
    /// Poisson-load serving simulation of one mapped pipeline.
    Simulate(Common),
    /// Design-space sweep with Pareto frontier.
    Explore {
        #[command(flatten)]
        common: Common,
        /// `tiny`, `default`, or a design-space JSON file.
        #[arg(long)]
        space: Option<String>,
    },
    /// Fits per-model noise to the catalog error rates.
    Calibrate(Common),
    /// Writes a Zipfian embedding access trace.
    TraceGen(Common),
    /// Per-query compute and embedding traffic against a baseline.
    Footprint(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Quality(_) => "quality",
            Command::Simulate(_) => "simulate",
            Command::Explore { .. } => "explore",
            Command::Calibrate(_) => "calibrate",
            Command::TraceGen(_) => "trace-gen",
            Command::Footprint(_) => "footprint",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Quality(c)
            | Command::Simulate(c)
            | Command::Calibrate(c)
            | Command::TraceGen(c)
            | Command::Footprint(c) => c,
            Command::Explore { common, .. } => common,
        }
    }
}

#[derive(Debug, Serialize)]
struct OutputFile {
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a str,
    seed: u64,
    jobs: Option<usize>,
    created_unix: u64,
    catalog_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    space: Option<&'a DesignSpace>,
    outputs: Vec<OutputFile>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load_space(arg: Option<&str>, fallback: Option<&DesignSpace>) -> anyhow::Result<DesignSpace> {
    Ok(match arg {
        Some("tiny") => DesignSpace::tiny(),
        Some("default") => DesignSpace::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {p}"))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de).map_err(|e| recpipe::Error::Parse {
                field: e.path().to_string(),
                message: e.inner().to_string(),
            })?
        }
        None => fallback.cloned().unwrap_or_default(),
    })
}

/// Runs one command and writes its manifest. Returns the outcome for
/// the caller to report.
pub fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let common = cli.command.common();
    let cfg = config::load(&common.config)?;
    let out: &Path = &common.out;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let seed = cfg.seed(common.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs.unwrap_or(0))
        .build()?;

    let mut space = None;
    let outcome = pool.install(|| match &cli.command {
        Command::Quality(_) => commands::quality(&cfg, seed, out),
        Command::Simulate(_) => commands::simulate(&cfg, seed, out),
        Command::Explore { space: arg, .. } => {
            let s = load_space(arg.as_deref(), cfg.run.space.as_ref())?;
            let r = commands::explore(&cfg, &s, seed, out);
            space = Some(s);
            r
        }
        Command::Calibrate(_) => commands::calibrate(&cfg, seed, out),
        Command::TraceGen(_) => commands::trace_gen(&cfg, common.seed.or(cfg.run.seed), out),
        Command::Footprint(_) => commands::footprint(&cfg, out),
    })?;

    let outputs = outcome
        .files
        .iter()
        .map(|f| {
            let bytes = std::fs::read(out.join(f))?;
            Ok(OutputFile {
                file: f.clone(),
                sha256: sha256_hex(&bytes),
            })
        })
        .collect::<std::io::Result<Vec<_>>>()?;
    let manifest = Manifest {
        tool: "recpipe",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        config: &common.config,
        seed,
        jobs: common.jobs,
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        catalog_sha256: sha256_hex(cfg.catalog.to_json().as_bytes()),
        space: space.as_ref(),
        outputs,
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(outcome)
}

/// Machine-readable failure record.
pub fn error_json(e: &anyhow::Error) -> String {
    let kind = e
        .chain()
        .find_map(|c| c.downcast_ref::<recpipe::Error>())
        .map_or("cli", |r| r.kind());
    serde_json::json!({ "error": { "kind": kind, "message": format!("{e:#}") } }).to_string()
}
