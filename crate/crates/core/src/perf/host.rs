//! Stage latency breakdowns and the CPU and GPU roofline models.

use serde::{Deserialize, Serialize};

use crate::catalog::{CpuSpec, GpuSpec, ModelSpec, StageConfig, BYTES_PER_ELEMENT};

/// Bytes per forwarded (id, score) pair.
pub const SCORED_ID_BYTES: u64 = 8;

/// Bytes per candidate id.
pub const ID_BYTES: u64 = 4;

/// Per-stage latency in seconds. `total_s` is the sum of the components.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub pcie_s: f64,
    pub embedding_s: f64,
    pub mlp_s: f64,
    pub filter_s: f64,
    pub total_s: f64,
}

impl StageLatency {
    pub fn new(pcie_s: f64, embedding_s: f64, mlp_s: f64, filter_s: f64) -> Self {
        StageLatency {
            pcie_s,
            embedding_s,
            mlp_s,
            filter_s,
            total_s: pcie_s + embedding_s + mlp_s + filter_s,
        }
    }

    pub fn add(&self, other: &StageLatency) -> StageLatency {
        StageLatency::new(
            self.pcie_s + other.pcie_s,
            self.embedding_s + other.embedding_s,
            self.mlp_s + other.mlp_s,
            self.filter_s + other.filter_s,
        )
    }
}

/// Fixed latency plus bytes over bandwidth.
pub fn pcie_time(bytes: u64, bw: u64, fixed_latency: f64) -> f64 {
    fixed_latency + bytes as f64 / bw as f64
}

/// Sparse ids for every candidate plus the dense features.
pub fn query_input_bytes(model: &ModelSpec, items: u32) -> u64 {
    items as u64 * model.lookups_per_item() * ID_BYTES
        + model.dense_features() as u64 * BYTES_PER_ELEMENT
}

/// Host-side top-k as a linear scan.
pub fn host_filter_time(items: u32, cpu: &CpuSpec) -> f64 {
    items as f64 * cpu.topk_cycles_per_item / cpu.freq_hz as f64
}

/// One query's stage on `threads_per_query` cores.
pub fn cpu_stage_latency(stage: &StageConfig, model: &ModelSpec, cpu: &CpuSpec) -> StageLatency {
    let items = stage.items_in as f64;
    let rate = cpu.peak_flops_per_core as f64 * cpu.threads_per_query as f64 * cpu.efficiency;
    let mlp = items * model.flops_per_item as f64 / rate;
    let bytes = items * model.lookups_per_item() as f64 * model.vector_bytes.max(cpu.line_bytes) as f64;
    let embedding = bytes / cpu.mem_bw as f64;
    StageLatency::new(0.0, embedding, mlp, host_filter_time(stage.items_in, cpu))
}

/// One query's stage on the GPU. Inputs come from and scores return to
/// the host on every stage.
pub fn gpu_stage_latency(
    stage: &StageConfig,
    model: &ModelSpec,
    gpu: &GpuSpec,
    cpu: &CpuSpec,
) -> StageLatency {
    let items = stage.items_in as f64;
    let mlp = items * model.flops_per_item as f64 / (gpu.peak_flops as f64 * gpu.efficiency)
        + gpu.launch_overhead;
    let bytes = items * model.lookups_per_item() as f64 * model.vector_bytes.max(gpu.line_bytes) as f64;
    let embedding = bytes / gpu.mem_bw as f64;
    let pcie = pcie_time(query_input_bytes(model, stage.items_in), gpu.pcie_bw, gpu.pcie_fixed_latency)
        + pcie_time(stage.items_in as u64 * SCORED_ID_BYTES, gpu.pcie_bw, gpu.pcie_fixed_latency);
    StageLatency::new(pcie, embedding, mlp, host_filter_time(stage.items_in, cpu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;

    #[test]
    fn pcie_fixed_and_linear() {
        assert_eq!(pcie_time(0, 12_000_000_000, 10e-6), 10e-6);
        let a = pcie_time(1 << 20, 12_000_000_000, 10e-6) - 10e-6;
        let b = pcie_time(2 << 20, 12_000_000_000, 10e-6) - 10e-6;
        assert!((b - 2.0 * a).abs() < 1e-18);
    }

    #[test]
    fn query_input_transfer() {
        let c = Catalog::default_catalog();
        let m = c.model("RM_large").unwrap();
        let bytes = query_input_bytes(m, 4096);
        assert_eq!(bytes, 4096 * 26 * 4 + 13 * 4);
        let t = pcie_time(bytes, 12_000_000_000, 10e-6);
        assert!((t - 10e-6 - 35.5e-6).abs() < 0.05e-6, "{t}");
    }

    #[test]
    fn breakdown_sums() {
        let c = Catalog::default_catalog();
        let hw = &c.hardware;
        let s = StageConfig::new("RM_large", 4096, 64);
        let m = c.model("RM_large").unwrap();
        for l in [cpu_stage_latency(&s, m, &hw.cpu), gpu_stage_latency(&s, m, &hw.gpu, &hw.cpu)] {
            let sum = l.pcie_s + l.embedding_s + l.mlp_s + l.filter_s;
            assert_eq!(l.total_s, sum);
            assert!(l.mlp_s > 0.0 && l.embedding_s > 0.0 && l.filter_s > 0.0);
        }
        assert_eq!(cpu_stage_latency(&s, m, &hw.cpu).pcie_s, 0.0);
        assert!(gpu_stage_latency(&s, m, &hw.gpu, &hw.cpu).pcie_s > 0.0);
    }

    #[test]
    fn cpu_scales_with_items() {
        let c = Catalog::default_catalog();
        let m = c.model("RM_large").unwrap();
        let a = cpu_stage_latency(&StageConfig::new("RM_large", 256, 64), m, &c.hardware.cpu);
        let b = cpu_stage_latency(&StageConfig::new("RM_large", 4096, 64), m, &c.hardware.cpu);
        assert!((b.total_s / a.total_s - 16.0).abs() < 1e-9);
    }
}
