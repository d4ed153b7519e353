//! Design-space description and exhaustive enumeration.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{validate_pipeline, AccelSpec, Catalog, Device, FilterMode, PipelineConfig, StageConfig};
use crate::error::{Error, Result};
use crate::perf::{AccelDesign, ArrayPartition};

/// Stage-to-device assignments considered by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingKind {
    AllCpu,
    AllAccel,
    GpuFrontCpuBack,
    GpuSingle,
    AccelBaseline,
}

impl MappingKind {
    pub fn all() -> Vec<MappingKind> {
        vec![
            MappingKind::AllCpu,
            MappingKind::AllAccel,
            MappingKind::GpuFrontCpuBack,
            MappingKind::GpuSingle,
            MappingKind::AccelBaseline,
        ]
    }
}

impl fmt::Display for MappingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MappingKind::AllCpu => "all_cpu",
            MappingKind::AllAccel => "all_accel",
            MappingKind::GpuFrontCpuBack => "gpu_front_cpu_back",
            MappingKind::GpuSingle => "gpu_single",
            MappingKind::AccelBaseline => "accel_baseline",
        })
    }
}

/// An accelerator partition template.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionSpec {
    Mono,
    /// Sub-array count per stage, equal area per stage.
    Split(Vec<u32>),
    /// `[count, rows, cols]` per stage.
    Groups(Vec<[u32; 3]>),
}

impl PartitionSpec {
    /// Stage count this template serves; `None` fits any.
    pub fn stages(&self) -> Option<usize> {
        match self {
            PartitionSpec::Mono => None,
            PartitionSpec::Split(v) => Some(v.len()),
            PartitionSpec::Groups(v) => Some(v.len()),
        }
    }

    pub fn build(&self, accel: &AccelSpec) -> Result<ArrayPartition> {
        match self {
            PartitionSpec::Mono => Ok(ArrayPartition::monolithic(accel)),
            PartitionSpec::Split(v) => ArrayPartition::per_stage(v, accel),
            PartitionSpec::Groups(v) => {
                let g: Vec<(u32, u32, u32)> = v.iter().map(|a| (a[0], a[1], a[2])).collect();
                ArrayPartition::from_groups(&g, accel)
            }
        }
    }
}

fn default_max_stages() -> usize {
    3
}

fn default_models() -> Vec<String> {
    ["RM_small", "RM_med", "RM_large"].map(String::from).to_vec()
}

fn default_items() -> Vec<u32> {
    vec![64, 256, 1024, 4096]
}

fn default_serve() -> u32 {
    64
}

fn default_partitions() -> Vec<PartitionSpec> {
    use PartitionSpec::*;
    vec![
        Mono,
        Split(vec![4]),
        Split(vec![1, 1]),
        Split(vec![2, 2]),
        Split(vec![4, 2]),
        Split(vec![8, 2]),
        Split(vec![8, 8]),
        Split(vec![8, 16]),
        Groups(vec![[4, 32, 32], [4, 32, 32], [2, 64, 64]]),
        Groups(vec![[2, 64, 32], [2, 32, 32], [1, 64, 64]]),
    ]
}

fn default_n_sub() -> Vec<u32> {
    vec![1, 4]
}

fn default_qps() -> Vec<f64> {
    vec![200.0, 1000.0, 5000.0, 20000.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSpace {
    #[serde(default = "default_max_stages")]
    pub max_stages: usize,
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    /// Candidate counts a stage may receive.
    #[serde(default = "default_items")]
    pub item_grid: Vec<u32>,
    #[serde(default = "default_serve")]
    pub serve_count: u32,
    pub mappings: Vec<MappingKind>,
    /// Every per-stage CPU/GPU/accelerator assignment instead of `mappings`.
    pub full_cross_product: bool,
    #[serde(default = "default_partitions")]
    pub partitions: Vec<PartitionSpec>,
    #[serde(default = "default_n_sub")]
    pub n_sub: Vec<u32>,
    #[serde(default = "default_qps")]
    pub qps: Vec<f64>,
    pub quality_floor: f64,
}

impl Default for DesignSpace {
    fn default() -> Self {
        DesignSpace {
            max_stages: default_max_stages(),
            models: default_models(),
            item_grid: default_items(),
            serve_count: default_serve(),
            mappings: MappingKind::all(),
            full_cross_product: false,
            partitions: default_partitions(),
            n_sub: default_n_sub(),
            qps: default_qps(),
            quality_floor: 0.0,
        }
    }
}

impl DesignSpace {
    /// Three single-stage RM_large@4096 configs (CPU, GPU, baseline accelerator) at one load.
    pub fn tiny() -> Self {
        DesignSpace {
            max_stages: 1,
            models: vec!["RM_large".into()],
            item_grid: vec![4096],
            mappings: vec![MappingKind::AllCpu, MappingKind::GpuSingle, MappingKind::AccelBaseline],
            partitions: vec![PartitionSpec::Mono],
            n_sub: vec![1],
            qps: vec![200.0],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |d: &str| Err(Error::validation("design_space", d.to_string()));
        if self.max_stages == 0 {
            return bad("max_stages must be >= 1");
        }
        if self.models.is_empty() || self.item_grid.is_empty() || self.qps.is_empty() {
            return bad("models, item_grid and qps must be non-empty");
        }
        if self.n_sub.is_empty() || self.n_sub.contains(&0) {
            return bad("n_sub must be non-empty and positive");
        }
        if !self.full_cross_product && self.mappings.is_empty() {
            return bad("no device mappings");
        }
        if self.qps.iter().any(|&q| !(q > 0.0 && q.is_finite())) {
            return bad("qps values must be positive");
        }
        if !(0.0..=100.0).contains(&self.quality_floor) {
            return bad("quality_floor must lie in [0, 100]");
        }
        Ok(())
    }
}

/// One hardware-mapped configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub id: usize,
    pub pipeline: PipelineConfig,
    pub mapping: String,
    pub design: Option<AccelDesign>,
    pub n_sub: u32,
}

impl Config {
    pub fn partition_label(&self) -> String {
        self.design.as_ref().map_or_else(|| "-".into(), |d| d.partition.to_string())
    }
}

/// Every valid funnel in the space, before device mapping, in
/// enumeration order.
pub fn enumerate_pipelines(space: &DesignSpace, catalog: &Catalog) -> Result<Vec<PipelineConfig>> {
    space.validate()?;
    for m in &space.models {
        catalog.model(m)?;
    }
    let mut out = Vec::new();
    for n in 1..=space.max_stages {
        let combos = space.item_grid.len().pow(n as u32) * space.models.len().pow(n as u32);
        for code in 0..combos {
            let mut c = code;
            let mut items = Vec::with_capacity(n);
            let mut models = Vec::with_capacity(n);
            for _ in 0..n {
                items.push(space.item_grid[c % space.item_grid.len()]);
                c /= space.item_grid.len();
            }
            for _ in 0..n {
                models.push(&space.models[c % space.models.len()]);
                c /= space.models.len();
            }
            let stages = (0..n)
                .map(|s| {
                    let out = if s + 1 < n { items[s + 1] } else { space.serve_count };
                    StageConfig::new(models[s].clone(), items[s], out)
                })
                .collect();
            let mut p = PipelineConfig::new(stages);
            p.serve_count = space.serve_count;
            if validate_pipeline(&p, catalog).is_ok() {
                out.push(p);
            }
        }
    }
    Ok(out)
}

fn on_all(p: &PipelineConfig, d: Device) -> PipelineConfig {
    let mut q = p.clone();
    for s in &mut q.stages {
        s.device = d;
    }
    q
}

/// Accelerator stages other than the last one of the run get `n_sub`
/// slices and the bucket filter.
fn accelerate(p: &PipelineConfig, n_sub: u32) -> PipelineConfig {
    let mut q = p.clone();
    let accel: Vec<usize> = (0..q.stages.len())
        .filter(|&i| matches!(q.stages[i].device, Device::Accel(_)))
        .collect();
    if let Some((_, head)) = accel.split_last() {
        for &i in head {
            q.stages[i].filter = FilterMode::BucketFilter;
            q.stages[i].sub_batches = n_sub;
        }
    }
    q
}

fn device_label(p: &PipelineConfig) -> String {
    p.stages
        .iter()
        .map(|s| match s.device {
            Device::Cpu => "cpu",
            Device::Gpu => "gpu",
            Device::Accel(_) => "accel",
        })
        .collect::<Vec<_>>()
        .join(">")
}

fn rpaccel_variants(
    p: &PipelineConfig,
    label: &str,
    space: &DesignSpace,
    catalog: &Catalog,
    out: &mut Vec<Config>,
) -> Result<()> {
    let n_accel = p.stages.iter().filter(|s| matches!(s.device, Device::Accel(_))).count();
    for spec in &space.partitions {
        if spec.stages().is_some_and(|k| k != n_accel) {
            continue;
        }
        let partition = spec.build(&catalog.hardware.accel)?;
        let subs: &[u32] = if n_accel > 1 { &space.n_sub } else { &[1] };
        for &n_sub in subs {
            let q = accelerate(p, n_sub);
            if validate_pipeline(&q, catalog).is_err() {
                continue;
            }
            out.push(Config {
                id: 0,
                pipeline: q,
                mapping: label.to_string(),
                design: Some(AccelDesign::rpaccel(partition.clone())),
                n_sub,
            });
        }
    }
    Ok(())
}

/// Maps every stage of `p` by `kind`. Accelerator mappings use
/// `partition` and, on stages that feed another accelerator stage,
/// `n_sub` slices with the bucket filter.
pub fn map_pipeline(
    p: &PipelineConfig,
    kind: MappingKind,
    partition: &PartitionSpec,
    n_sub: u32,
    catalog: &Catalog,
) -> Result<Config> {
    validate_pipeline(p, catalog)?;
    let accel = &catalog.hardware.accel;
    let (pipeline, design, n_sub) = match kind {
        MappingKind::AllCpu => (on_all(p, Device::Cpu), None, 1),
        MappingKind::GpuSingle => (on_all(p, Device::Gpu), None, 1),
        MappingKind::GpuFrontCpuBack => {
            let mut q = on_all(p, Device::Cpu);
            q.stages[0].device = Device::Gpu;
            (q, None, 1)
        }
        MappingKind::AccelBaseline => (on_all(p, Device::Accel(0)), Some(AccelDesign::baseline(accel)), 1),
        MappingKind::AllAccel => (
            accelerate(&on_all(p, Device::Accel(0)), n_sub),
            Some(AccelDesign::rpaccel(partition.build(accel)?)),
            n_sub,
        ),
    };
    validate_pipeline(&pipeline, catalog)?;
    Ok(Config {
        id: 0,
        pipeline,
        mapping: kind.to_string(),
        design,
        n_sub,
    })
}

/// Mapped configurations in deterministic order.
pub fn enumerate(space: &DesignSpace, catalog: &Catalog) -> Result<Vec<Config>> {
    let pipelines = enumerate_pipelines(space, catalog)?;
    let mut out = Vec::new();
    let plain = |p: PipelineConfig, mapping: String, design: Option<AccelDesign>| Config {
        id: 0,
        pipeline: p,
        mapping,
        design,
        n_sub: 1,
    };
    for p in &pipelines {
        let n = p.stages.len();
        if space.full_cross_product {
            let devices = [Device::Cpu, Device::Gpu, Device::Accel(0)];
            for code in 0..3usize.pow(n as u32) {
                let mut q = p.clone();
                let mut c = code;
                for s in &mut q.stages {
                    s.device = devices[c % 3];
                    c /= 3;
                }
                let acc: Vec<usize> = (0..n).filter(|&i| q.stages[i].device == Device::Accel(0)).collect();
                if acc.windows(2).any(|w| w[1] != w[0] + 1) {
                    continue;
                }
                let label = device_label(&q);
                if acc.is_empty() {
                    out.push(plain(q, label, None));
                } else {
                    rpaccel_variants(&q, &label, space, catalog, &mut out)?;
                }
            }
            if space.mappings.contains(&MappingKind::AccelBaseline) {
                let d = AccelDesign::baseline(&catalog.hardware.accel);
                out.push(plain(on_all(p, Device::Accel(0)), MappingKind::AccelBaseline.to_string(), Some(d)));
            }
            continue;
        }
        for &m in &space.mappings {
            let label = m.to_string();
            match m {
                MappingKind::AllCpu => out.push(plain(on_all(p, Device::Cpu), label, None)),
                MappingKind::GpuSingle if n == 1 => out.push(plain(on_all(p, Device::Gpu), label, None)),
                MappingKind::GpuFrontCpuBack if n >= 2 => {
                    let mut q = on_all(p, Device::Cpu);
                    q.stages[0].device = Device::Gpu;
                    out.push(plain(q, label, None));
                }
                MappingKind::AccelBaseline => {
                    let d = AccelDesign::baseline(&catalog.hardware.accel);
                    out.push(plain(on_all(p, Device::Accel(0)), label, Some(d)));
                }
                MappingKind::AllAccel => {
                    rpaccel_variants(&on_all(p, Device::Accel(0)), &label, space, catalog, &mut out)?
                }
                _ => {}
            }
        }
    }
    for (i, c) in out.iter_mut().enumerate() {
        c.id = i;
    }
    Ok(out)
}
