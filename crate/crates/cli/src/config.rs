//! Run configuration: a catalog plus the per-command settings.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use recpipe::desim::SimOptions;
use recpipe::explore::{map_pipeline, Budgets, Config, DesignSpace, MappingKind, PartitionSpec};
use recpipe::quality::QualityConfig;
use recpipe::trace::TraceSpec;
use recpipe::{load_catalog, Catalog, Error, PipelineConfig};

/// A catalog by path, `"default"`, or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CatalogRef {
    Path(String),
    Inline(serde_json::Value),
}

/// A catalog pipeline by name, or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PipelineRef {
    Name(String),
    Inline(PipelineConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub qps: Vec<f64>,
    /// Measured queries per load point.
    pub queries: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            qps: vec![200.0],
            queries: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub catalog: Option<CatalogRef>,
    pub seed: Option<u64>,
    pub pipeline: Option<PipelineRef>,
    /// Reference pipeline for footprint reductions.
    pub baseline: Option<PipelineRef>,
    pub mapping: MappingKind,
    pub partition: PartitionSpec,
    pub n_sub: u32,
    pub workload: WorkloadSpec,
    pub sim: SimOptions,
    pub quality: QualityConfig,
    pub budgets: Budgets,
    pub trace: Option<TraceSpec>,
    pub space: Option<DesignSpace>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            catalog: None,
            seed: None,
            pipeline: None,
            baseline: None,
            mapping: MappingKind::AllCpu,
            partition: PartitionSpec::Mono,
            n_sub: 1,
            workload: WorkloadSpec::default(),
            sim: SimOptions::default(),
            quality: QualityConfig::default(),
            budgets: Budgets::default(),
            trace: None,
            space: None,
        }
    }
}

/// A parsed run configuration with its catalog resolved.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub run: RunConfig,
    pub catalog: Catalog,
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn resolve_catalog(r: Option<&CatalogRef>, base: &Path) -> anyhow::Result<Catalog> {
    Ok(match r {
        None => Catalog::default_catalog(),
        Some(CatalogRef::Path(p)) if p == "default" => Catalog::default_catalog(),
        Some(CatalogRef::Path(p)) => load_catalog(&read(&base.join(p))?)?,
        Some(CatalogRef::Inline(v)) => load_catalog(&v.to_string())?,
    })
}

/// Reads `--config`: `"default"`, a bare catalog file, or a run config.
pub fn load(arg: &str) -> anyhow::Result<Loaded> {
    if arg == "default" {
        return Ok(Loaded {
            run: RunConfig::default(),
            catalog: Catalog::default_catalog(),
        });
    }
    let path = Path::new(arg);
    let text = read(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))?;
    if value.get("models").is_some() {
        return Ok(Loaded {
            run: RunConfig::default(),
            catalog: load_catalog(&text)?,
        });
    }
    let run: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| Error::Parse {
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let catalog = resolve_catalog(run.catalog.as_ref(), base)?;
    Ok(Loaded { run, catalog })
}

impl Loaded {
    pub fn pipeline_ref(&self, r: &PipelineRef) -> anyhow::Result<PipelineConfig> {
        match r {
            PipelineRef::Name(n) => self
                .catalog
                .pipeline(n)
                .cloned()
                .ok_or_else(|| Error::Config(format!("catalog has no pipeline named `{n}`")).into()),
            PipelineRef::Inline(p) => Ok(p.clone()),
        }
    }

    /// The configured pipeline, else the catalog pipeline `fallback`.
    pub fn pipeline_or(&self, fallback: &str) -> anyhow::Result<PipelineConfig> {
        let r = self.run.pipeline.clone().unwrap_or(PipelineRef::Name(fallback.into()));
        self.pipeline_ref(&r)
    }

    /// Every pipeline a quality run covers: the configured one, else the
    /// whole catalog.
    pub fn quality_pipelines(&self) -> anyhow::Result<Vec<PipelineConfig>> {
        match &self.run.pipeline {
            Some(r) => Ok(vec![self.pipeline_ref(r)?]),
            None if self.catalog.pipelines.is_empty() => Err(Error::Config("catalog defines no pipelines".into()).into()),
            None => Ok(self.catalog.pipelines.clone()),
        }
    }

    /// The configured pipeline mapped onto hardware.
    pub fn mapped(&self, fallback: &str) -> anyhow::Result<Config> {
        let p = self.pipeline_or(fallback)?;
        Ok(map_pipeline(&p, self.run.mapping, &self.run.partition, self.run.n_sub, &self.catalog)?)
    }

    pub fn seed(&self, cli: Option<u64>) -> u64 {
        cli.or(self.run.seed).unwrap_or(1)
    }
}
