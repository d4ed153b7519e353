//! Model and hardware descriptors, pipeline validation and static
//! compute/memory accounting.
//!
//! A catalog is a JSON document with three top-level arrays/objects:
//! `models`, `hardware` and `pipelines`. See `docs/formats.md` for the schema.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bytes per embedding element (32-bit values).
pub const BYTES_PER_ELEMENT: u64 = 4;

/// The catalog shipped with the repository (three reference models, default
/// hardware constants and the reference pipelines).
pub const DEFAULT_CATALOG: &str = include_str!("../../../configs/default.json");

fn one() -> u32 {
    1
}

fn default_serve_count() -> u32 {
    64
}

/// A recommendation model descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: String,
    pub embedding_dim: u32,
    /// Layer widths, input first (e.g. `[13, 64, 4]`).
    pub mlp_bottom: Vec<u32>,
    /// Layer widths, input first; the last width is the CTR output and must be 1.
    pub mlp_top: Vec<u32>,
    pub num_tables: u32,
    pub rows_per_table: u64,
    /// Bytes per embedding vector. Optional in the document; derived as
    /// `embedding_dim * 4` when omitted.
    #[serde(default)]
    pub vector_bytes: u64,
    pub flops_per_item: u64,
    pub size_bytes: u64,
    pub error_rate: f64,
    /// Score-noise standard deviation. Filled in by noise calibration when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    /// Embedding lookups per table per item.
    #[serde(default = "one")]
    pub pooling_factor: u32,
}

impl ModelSpec {
    /// Consecutive `(in, out)` widths of every MLP layer, bottom stack first.
    pub fn layers(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.mlp_bottom
            .windows(2)
            .chain(self.mlp_top.windows(2))
            .map(|w| (w[0], w[1]))
    }

    pub fn macs_per_item(&self) -> u64 {
        self.layers().map(|(k, n)| k as u64 * n as u64).sum()
    }

    pub fn weight_bytes(&self) -> u64 {
        self.macs_per_item() * BYTES_PER_ELEMENT
    }

    /// Embedding lookups needed to score one item.
    pub fn lookups_per_item(&self) -> u64 {
        self.num_tables as u64 * self.pooling_factor as u64
    }

    pub fn table_bytes(&self) -> u64 {
        self.num_tables as u64 * self.rows_per_table * self.vector_bytes
    }

    /// Dense (continuous) input features, i.e. the bottom MLP input width.
    pub fn dense_features(&self) -> u32 {
        self.mlp_bottom.first().copied().unwrap_or(0)
    }

    fn normalize_and_check(&mut self) -> Result<()> {
        let expected = self.embedding_dim as u64 * BYTES_PER_ELEMENT;
        if self.vector_bytes == 0 {
            self.vector_bytes = expected;
        }
        let ctx = |msg: &str| format!("model `{}`: {msg}", self.id);
        if self.id.is_empty() {
            return Err(Error::validation("id", "model id must be non-empty"));
        }
        if self.vector_bytes != expected {
            return Err(Error::validation(
                "vector_bytes",
                ctx(&format!(
                    "vector_bytes = {} but embedding_dim x 4 = {expected}",
                    self.vector_bytes
                )),
            ));
        }
        if self.embedding_dim == 0 {
            return Err(Error::validation("embedding_dim", ctx("must be > 0")));
        }
        if self.flops_per_item == 0 {
            return Err(Error::validation("flops_per_item", ctx("must be > 0")));
        }
        if self.size_bytes == 0 {
            return Err(Error::validation("size_bytes", ctx("must be > 0")));
        }
        if !(self.error_rate > 0.0 && self.error_rate < 0.5) {
            return Err(Error::validation(
                "error_rate",
                ctx(&format!("{} is outside (0, 0.5)", self.error_rate)),
            ));
        }
        if self.mlp_bottom.len() < 2 || self.mlp_bottom.contains(&0) {
            return Err(Error::validation(
                "mlp_bottom",
                ctx("needs at least two non-zero widths"),
            ));
        }
        if self.mlp_top.len() < 2 || self.mlp_top.contains(&0) {
            return Err(Error::validation(
                "mlp_top",
                ctx("needs at least two non-zero widths"),
            ));
        }
        if self.mlp_top.last() != Some(&1) {
            return Err(Error::validation(
                "mlp_top last layer",
                ctx("last layer width must be 1 (single CTR output)"),
            ));
        }
        if self.num_tables == 0 || self.rows_per_table == 0 {
            return Err(Error::validation(
                "embedding tables",
                ctx("num_tables and rows_per_table must be > 0"),
            ));
        }
        if self.pooling_factor == 0 {
            return Err(Error::validation("pooling_factor", ctx("must be >= 1")));
        }
        if let Some(s) = self.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::validation("noise_sigma", ctx("must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    #[default]
    ExactTopk,
    BucketFilter,
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterMode::ExactTopk => "exact_topk",
            FilterMode::BucketFilter => "bucket_filter",
        })
    }
}

/// Where a stage executes. `Accel(g)` names a sub-array group of the
/// accelerator partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Device {
    #[default]
    Cpu,
    Gpu,
    Accel(u32),
}

impl Device {
    pub fn kind(&self) -> DeviceKind {
        match self {
            Device::Cpu => DeviceKind::Cpu,
            Device::Gpu => DeviceKind::Gpu,
            Device::Accel(_) => DeviceKind::Accel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeviceKind {
    Cpu,
    Gpu,
    Accel,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub model: String,
    pub items_in: u32,
    pub items_out: u32,
    #[serde(default)]
    pub filter: FilterMode,
    #[serde(default = "one")]
    pub sub_batches: u32,
    #[serde(default)]
    pub device: Device,
}

impl StageConfig {
    pub fn new(model: impl Into<String>, items_in: u32, items_out: u32) -> Self {
        StageConfig {
            model: model.into(),
            items_in,
            items_out,
            filter: FilterMode::ExactTopk,
            sub_batches: 1,
            device: Device::Cpu,
        }
    }

    pub fn with_filter(mut self, filter: FilterMode) -> Self {
        self.filter = filter;
        self
    }

    pub fn with_sub_batches(mut self, n: u32) -> Self {
        self.sub_batches = n;
        self
    }

    pub fn on(mut self, device: Device) -> Self {
        self.device = device;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub name: String,
    pub stages: Vec<StageConfig>,
    #[serde(default = "default_serve_count")]
    pub serve_count: u32,
}

impl PipelineConfig {
    pub fn new(stages: Vec<StageConfig>) -> Self {
        PipelineConfig {
            name: String::new(),
            stages,
            serve_count: default_serve_count(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Candidate count entering the first stage.
    pub fn items_in(&self) -> u32 {
        self.stages.first().map(|s| s.items_in).unwrap_or(0)
    }

    /// Compact label such as `RM_small@4096>256|RM_large@256>64`.
    pub fn label(&self) -> String {
        self.stages
            .iter()
            .map(|s| format!("{}@{}>{}", s.model, s.items_in, s.items_out))
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// A single broken pipeline invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    ZeroServeCount,
    ItemsOutZero { stage: usize },
    ItemsOutExceedsIn { stage: usize },
    SubBatchesZero { stage: usize },
    SubBatchesNotDividing { stage: usize },
    SubBatchesExceedItemsOut { stage: usize },
    /// `stage` forwards a different count than `stage + 1` receives.
    ChainBroken { stage: usize },
    ItemsNotDecreasing { stage: usize },
    ComplexityDecreasing { stage: usize },
    ServeCountExceedsOutput,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "pipeline has no stages"),
            Violation::ZeroServeCount => write!(f, "serve_count must be >= 1"),
            Violation::ItemsOutZero { stage } => write!(f, "stage {stage}: items_out must be >= 1"),
            Violation::ItemsOutExceedsIn { stage } => {
                write!(f, "stage {stage}: items_out exceeds items_in")
            }
            Violation::SubBatchesZero { stage } => write!(f, "stage {stage}: sub_batches must be >= 1"),
            Violation::SubBatchesNotDividing { stage } => {
                write!(f, "stage {stage}: sub_batches does not divide items_in")
            }
            Violation::SubBatchesExceedItemsOut { stage } => {
                write!(f, "stage {stage}: sub_batches exceeds items_out")
            }
            Violation::ChainBroken { stage } => write!(
                f,
                "stage {stage}: items_out does not equal items_in of stage {}",
                stage + 1
            ),
            Violation::ItemsNotDecreasing { stage } => {
                write!(f, "stage {stage}: items_in not strictly decreasing")
            }
            Violation::ComplexityDecreasing { stage } => {
                write!(f, "stage {stage}: model complexity decreasing")
            }
            Violation::ServeCountExceedsOutput => {
                write!(f, "last stage items_out is below serve_count")
            }
        }
    }
}

/// Host CPU parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpuSpec {
    pub cores: u32,
    pub freq_hz: u64,
    pub peak_flops_per_core: u64,
    pub mem_bw: u64,
    /// Fraction of peak FLOP/s attained by the MLP kernels.
    pub efficiency: f64,
    /// Cores cooperating on one query; the CPU pool has `cores / threads_per_query` servers.
    pub threads_per_query: u32,
    /// Host top-k cost per candidate, in core cycles.
    pub topk_cycles_per_item: f64,
    /// Minimum DRAM transfer per embedding lookup.
    pub line_bytes: u64,
}

impl Default for CpuSpec {
    fn default() -> Self {
        CpuSpec {
            cores: 64,
            freq_hz: 2_800_000_000,
            // 2 AVX-512 FMA units x 16 lanes x 2 FLOP.
            peak_flops_per_core: 89_600_000_000,
            mem_bw: 75_000_000_000,
            efficiency: 0.35,
            threads_per_query: 8,
            topk_cycles_per_item: 8.0,
            line_bytes: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpuSpec {
    pub peak_flops: u64,
    pub mem_bw: u64,
    pub pcie_bw: u64,
    /// Seconds.
    pub pcie_fixed_latency: f64,
    /// Achieved occupancy relative to peak.
    pub efficiency: f64,
    /// Fixed per-stage kernel launch cost in seconds.
    pub launch_overhead: f64,
    pub line_bytes: u64,
}

impl Default for GpuSpec {
    fn default() -> Self {
        GpuSpec {
            // 2560 cores x 585 MHz x 2 FLOP.
            peak_flops: 2_995_200_000_000,
            mem_bw: 300_000_000_000,
            pcie_bw: 12_000_000_000,
            pcie_fixed_latency: 10e-6,
            efficiency: 0.25,
            launch_overhead: 20e-6,
            line_bytes: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccelSpec {
    pub freq_hz: u64,
    pub array_rows: u32,
    pub array_cols: u32,
    pub weight_sram_bytes: u64,
    /// Total embedding cache (static + look-ahead).
    pub embed_cache_bytes: u64,
    pub lookahead_cache_bytes: u64,
    pub dram_capacity_bytes: u64,
    pub dram_bw_bytes_per_s: u64,
    pub dram_latency_cycles: u32,
    pub cache_line_bytes: u64,
    pub pcie_bw: u64,
    /// Seconds.
    pub pcie_fixed_latency: f64,
    pub sram_latency_cycles: u32,
    /// Outstanding embedding lookups per gather unit.
    pub gather_parallelism: u32,
    pub filter_bins: u32,
    pub ctr_threshold: f64,
    /// Share of the static embedding cache given to the frontend stage.
    pub static_frontend_fraction: f64,
}

impl Default for AccelSpec {
    fn default() -> Self {
        AccelSpec {
            freq_hz: 250_000_000,
            array_rows: 128,
            array_cols: 128,
            weight_sram_bytes: 8 << 20,
            embed_cache_bytes: 16 << 20,
            lookahead_cache_bytes: 4 << 20,
            dram_capacity_bytes: 16 << 30,
            dram_bw_bytes_per_s: 64_000_000_000,
            dram_latency_cycles: 100,
            cache_line_bytes: 128,
            pcie_bw: 12_000_000_000,
            pcie_fixed_latency: 10e-6,
            sram_latency_cycles: 2,
            gather_parallelism: 128,
            filter_bins: 16,
            ctr_threshold: 0.5,
            static_frontend_fraction: 0.5,
        }
    }
}

impl AccelSpec {
    pub fn dram_bytes_per_cycle(&self) -> f64 {
        self.dram_bw_bytes_per_s as f64 / self.freq_hz as f64
    }

    pub fn static_cache_bytes(&self) -> u64 {
        self.embed_cache_bytes.saturating_sub(self.lookahead_cache_bytes)
    }

    pub fn array_area(&self) -> u64 {
        self.array_rows as u64 * self.array_cols as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareSpec {
    pub cpu: CpuSpec,
    pub gpu: GpuSpec,
    pub accel: AccelSpec,
}

impl HardwareSpec {
    pub fn validate(&self) -> Result<()> {
        let c = &self.cpu;
        let positive = [
            ("cpu.cores", c.cores as f64),
            ("cpu.freq_hz", c.freq_hz as f64),
            ("cpu.peak_flops_per_core", c.peak_flops_per_core as f64),
            ("cpu.mem_bw", c.mem_bw as f64),
            ("cpu.efficiency", c.efficiency),
            ("cpu.threads_per_query", c.threads_per_query as f64),
            ("cpu.topk_cycles_per_item", c.topk_cycles_per_item),
            ("cpu.line_bytes", c.line_bytes as f64),
            ("gpu.peak_flops", self.gpu.peak_flops as f64),
            ("gpu.mem_bw", self.gpu.mem_bw as f64),
            ("gpu.pcie_bw", self.gpu.pcie_bw as f64),
            ("gpu.efficiency", self.gpu.efficiency),
            ("gpu.line_bytes", self.gpu.line_bytes as f64),
            ("accel.freq_hz", self.accel.freq_hz as f64),
            ("accel.array_rows", self.accel.array_rows as f64),
            ("accel.array_cols", self.accel.array_cols as f64),
            ("accel.weight_sram_bytes", self.accel.weight_sram_bytes as f64),
            ("accel.embed_cache_bytes", self.accel.embed_cache_bytes as f64),
            ("accel.dram_capacity_bytes", self.accel.dram_capacity_bytes as f64),
            ("accel.dram_bw_bytes_per_s", self.accel.dram_bw_bytes_per_s as f64),
            ("accel.dram_latency_cycles", self.accel.dram_latency_cycles as f64),
            ("accel.cache_line_bytes", self.accel.cache_line_bytes as f64),
            ("accel.pcie_bw", self.accel.pcie_bw as f64),
            ("accel.sram_latency_cycles", self.accel.sram_latency_cycles as f64),
            ("accel.gather_parallelism", self.accel.gather_parallelism as f64),
            ("accel.filter_bins", self.accel.filter_bins as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(name, "must be positive"));
            }
        }
        for (name, v) in [
            ("gpu.pcie_fixed_latency", self.gpu.pcie_fixed_latency),
            ("gpu.launch_overhead", self.gpu.launch_overhead),
            ("accel.pcie_fixed_latency", self.accel.pcie_fixed_latency),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(name, "must be >= 0"));
            }
        }
        if c.efficiency > 1.0 || self.gpu.efficiency > 1.0 {
            return Err(Error::validation("efficiency", "must be <= 1"));
        }
        if c.threads_per_query > c.cores {
            return Err(Error::validation("cpu.threads_per_query", "exceeds cpu.cores"));
        }
        let a = &self.accel;
        if a.lookahead_cache_bytes > a.embed_cache_bytes {
            return Err(Error::validation(
                "accel.lookahead_cache_bytes",
                "exceeds accel.embed_cache_bytes",
            ));
        }
        if a.filter_bins < 2 {
            return Err(Error::validation("accel.filter_bins", "must be >= 2"));
        }
        if !(0.0..=1.0).contains(&a.ctr_threshold) || !(0.0..=1.0).contains(&a.static_frontend_fraction) {
            return Err(Error::validation(
                "accel fractions",
                "ctr_threshold and static_frontend_fraction must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// Models, hardware and named pipelines, validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub hardware: HardwareSpec,
    #[serde(default)]
    pub pipelines: Vec<PipelineConfig>,
}

impl Catalog {
    pub fn model(&self, id: &str) -> Result<&ModelSpec> {
        self.models
            .iter()
            .find(|m| m.id == id)
            .ok_or_else(|| Error::UnknownModel(id.to_string()))
    }

    pub fn model_mut(&mut self, id: &str) -> Result<&mut ModelSpec> {
        self.models
            .iter_mut()
            .find(|m| m.id == id)
            .ok_or_else(|| Error::UnknownModel(id.to_string()))
    }

    pub fn pipeline(&self, name: &str) -> Option<&PipelineConfig> {
        self.pipelines.iter().find(|p| p.name == name)
    }

    pub fn default_catalog() -> Catalog {
        load_catalog(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }
}

/// Parses and validates a catalog document.
pub fn load_catalog(text: &str) -> Result<Catalog> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut catalog: Catalog = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Parse {
            field: path,
            message: e.into_inner().to_string(),
        }
    })?;
    let mut seen = HashSet::new();
    for m in &mut catalog.models {
        m.normalize_and_check()?;
        if !seen.insert(m.id.clone()) {
            return Err(Error::validation("id", format!("duplicate model id `{}`", m.id)));
        }
    }
    catalog.hardware.validate()?;
    for p in &catalog.pipelines {
        validate_pipeline(p, &catalog)?;
    }
    Ok(catalog)
}

/// Checks funnel structure. Returns every broken rule at once.
pub fn validate_pipeline(p: &PipelineConfig, catalog: &Catalog) -> Result<()> {
    let models = p
        .stages
        .iter()
        .map(|s| catalog.model(&s.model))
        .collect::<Result<Vec<_>>>()?;

    let mut v = Vec::new();
    if p.stages.is_empty() {
        v.push(Violation::Empty);
    }
    if p.serve_count == 0 {
        v.push(Violation::ZeroServeCount);
    }
    for (i, s) in p.stages.iter().enumerate() {
        if s.items_out == 0 {
            v.push(Violation::ItemsOutZero { stage: i });
        }
        if s.items_out > s.items_in {
            v.push(Violation::ItemsOutExceedsIn { stage: i });
        }
        if s.sub_batches == 0 {
            v.push(Violation::SubBatchesZero { stage: i });
        } else {
            if s.items_in % s.sub_batches != 0 {
                v.push(Violation::SubBatchesNotDividing { stage: i });
            }
            if s.items_out < s.sub_batches {
                v.push(Violation::SubBatchesExceedItemsOut { stage: i });
            }
        }
    }
    for (i, pair) in p.stages.windows(2).enumerate() {
        if pair[0].items_out != pair[1].items_in {
            v.push(Violation::ChainBroken { stage: i });
        }
        if pair[1].items_in >= pair[0].items_in {
            v.push(Violation::ItemsNotDecreasing { stage: i + 1 });
        }
        if models[i + 1].flops_per_item < models[i].flops_per_item {
            v.push(Violation::ComplexityDecreasing { stage: i + 1 });
        }
    }
    if let Some(last) = p.stages.last() {
        if last.items_out < p.serve_count {
            v.push(Violation::ServeCountExceedsOutput);
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidPipeline(v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageFootprint {
    pub model: String,
    pub items_in: u32,
    pub flops: u64,
    pub embedding_bytes: u64,
}

/// Per-query compute and embedding traffic of a pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Footprint {
    pub total_flops: u64,
    pub embedding_bytes: u64,
    pub per_stage: Vec<StageFootprint>,
}

impl Footprint {
    /// `(compute, embedding)` reduction factors of `self` relative to `baseline`.
    pub fn reduction_vs(&self, baseline: &Footprint) -> (f64, f64) {
        (
            baseline.total_flops as f64 / self.total_flops as f64,
            baseline.embedding_bytes as f64 / self.embedding_bytes as f64,
        )
    }
}

pub fn resource_footprint(p: &PipelineConfig, catalog: &Catalog) -> Result<Footprint> {
    validate_pipeline(p, catalog)?;
    let mut per_stage = Vec::with_capacity(p.stages.len());
    for s in &p.stages {
        let m = catalog.model(&s.model)?;
        let items = s.items_in as u64;
        per_stage.push(StageFootprint {
            model: s.model.clone(),
            items_in: s.items_in,
            flops: items * m.flops_per_item,
            embedding_bytes: items * m.lookups_per_item() * m.vector_bytes,
        });
    }
    Ok(Footprint {
        total_flops: per_stage.iter().map(|s| s.flops).sum(),
        embedding_bytes: per_stage.iter().map(|s| s.embedding_bytes).sum(),
        per_stage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_stage() -> PipelineConfig {
        PipelineConfig::new(vec![
            StageConfig::new("RM_small", 4096, 256),
            StageConfig::new("RM_large", 256, 64),
        ])
    }

    #[test]
    fn default_catalog_has_reference_models() {
        let c = Catalog::default_catalog();
        let large = c.model("RM_large").unwrap();
        assert_eq!(large.flops_per_item, 180_000);
        assert_eq!(large.size_bytes, 8 << 30);
        assert_eq!(large.error_rate, 0.2113);
        assert_eq!(large.vector_bytes, 128);
        assert_eq!(c.model("RM_small").unwrap().mlp_bottom, vec![13, 64, 4]);
        assert_eq!(c.model("RM_med").unwrap().error_rate, 0.2126);
        assert_eq!(c.hardware, HardwareSpec::default());
    }

    #[test]
    fn one_model_without_hardware_gets_defaults() {
        let text = r#"{"models": [{"id": "m", "embedding_dim": 8, "mlp_bottom": [13, 8],
            "mlp_top": [16, 1], "num_tables": 2, "rows_per_table": 10,
            "flops_per_item": 100, "size_bytes": 1000, "error_rate": 0.2}]}"#;
        let c = load_catalog(text).unwrap();
        assert_eq!(c.hardware, HardwareSpec::default());
        assert_eq!(c.hardware.accel.freq_hz, 250_000_000);
        assert_eq!(c.hardware.accel.array_rows, 128);
        assert_eq!(c.models[0].vector_bytes, 32);
    }

    #[test]
    fn mlp_top_must_end_in_single_output() {
        let text = r#"{"models": [{"id": "m", "embedding_dim": 8, "mlp_bottom": [13, 8],
            "mlp_top": [16, 2], "num_tables": 2, "rows_per_table": 10,
            "flops_per_item": 100, "size_bytes": 1000, "error_rate": 0.2}]}"#;
        match load_catalog(text) {
            Err(Error::Validation { rule, .. }) => assert_eq!(rule, "mlp_top last layer"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn schema_violation_names_field() {
        let text = r#"{"models": [{"id": "m", "embedding_dim": "eight"}]}"#;
        match load_catalog(text) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "models[0].embedding_dim"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn error_rate_bounds() {
        let text = r#"{"models": [{"id": "m", "embedding_dim": 8, "mlp_bottom": [13, 8],
            "mlp_top": [16, 1], "num_tables": 2, "rows_per_table": 10,
            "flops_per_item": 100, "size_bytes": 1000, "error_rate": 0.5}]}"#;
        assert!(matches!(load_catalog(text), Err(Error::Validation { .. })));
    }

    #[test]
    fn reference_two_stage_is_valid() {
        let c = Catalog::default_catalog();
        validate_pipeline(&two_stage(), &c).unwrap();
        let single = PipelineConfig::new(vec![StageConfig::new("RM_large", 4096, 64)]);
        validate_pipeline(&single, &c).unwrap();
    }

    #[test]
    fn reversed_funnel_reports_every_violation() {
        let c = Catalog::default_catalog();
        let p = PipelineConfig::new(vec![
            StageConfig::new("RM_large", 256, 64),
            StageConfig::new("RM_small", 4096, 256),
        ]);
        let Err(Error::InvalidPipeline(v)) = validate_pipeline(&p, &c) else {
            panic!("expected violations");
        };
        assert!(v.contains(&Violation::ChainBroken { stage: 0 }));
        assert!(v.contains(&Violation::ItemsNotDecreasing { stage: 1 }));
        assert!(v.contains(&Violation::ComplexityDecreasing { stage: 1 }));
    }

    #[test]
    fn unknown_model_is_an_error() {
        let c = Catalog::default_catalog();
        let p = PipelineConfig::new(vec![StageConfig::new("RM_huge", 256, 64)]);
        assert!(matches!(validate_pipeline(&p, &c), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn empty_pipeline_rejected() {
        let c = Catalog::default_catalog();
        let p = PipelineConfig::new(vec![]);
        assert!(matches!(
            resource_footprint(&p, &c),
            Err(Error::InvalidPipeline(v)) if v == vec![Violation::Empty]
        ));
    }

    #[test]
    fn sub_batch_rules() {
        let c = Catalog::default_catalog();
        let p = PipelineConfig::new(vec![
            StageConfig::new("RM_small", 4096, 256).with_sub_batches(3),
            StageConfig::new("RM_large", 256, 64),
        ]);
        let Err(Error::InvalidPipeline(v)) = validate_pipeline(&p, &c) else {
            panic!()
        };
        assert_eq!(v, vec![Violation::SubBatchesNotDividing { stage: 0 }]);
    }

    #[test]
    fn single_stage_large_footprint() {
        let c = Catalog::default_catalog();
        let p = PipelineConfig::new(vec![StageConfig::new("RM_large", 4096, 64)]);
        let f = resource_footprint(&p, &c).unwrap();
        assert_eq!(f.total_flops, 737_280_000);
        assert_eq!(f.embedding_bytes, 4096 * 26 * 128);
    }

    #[test]
    fn two_stage_reductions() {
        let c = Catalog::default_catalog();
        let single = resource_footprint(
            &PipelineConfig::new(vec![StageConfig::new("RM_large", 4096, 64)]),
            &c,
        )
        .unwrap();
        let two = resource_footprint(&two_stage(), &c).unwrap();
        // 4096*1100 + 256*180000 and 4096*26*16 + 256*26*128
        assert_eq!(two.total_flops, 50_585_600);
        assert_eq!(two.embedding_bytes, 2_555_904);
        let (compute, memory) = two.reduction_vs(&single);
        assert!((compute - 14.575).abs() < 1e-3);
        assert!((memory - 16.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn catalog_round_trip() {
        let c = Catalog::default_catalog();
        let again = load_catalog(&c.to_json()).unwrap();
        assert_eq!(c, again);
    }
}
