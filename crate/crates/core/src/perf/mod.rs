//! Analytic latency and utilization models for CPU, GPU and the accelerator.

pub mod accel;
pub mod cache;
pub mod host;
pub mod partition;
pub mod ssd;
pub mod systolic;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, DeviceKind, PipelineConfig};
use crate::error::{Error, Result};

pub use accel::{
    accel_query_latency, filter_cycles, lookahead_effect, plan_accel, with_sub_batches, AccelDesign,
    AccelLatency, AccelPlan, AccelTask, GanttEntry, Ready,
};
pub use cache::{
    amat_cycles, analytic_hit_rate, embedding_access_sim, miss_cycles, static_split, CacheProfile,
    CacheStats, SplitSim, StageAccesses,
};
pub use host::{cpu_stage_latency, gpu_stage_latency, host_filter_time, pcie_time, query_input_bytes, StageLatency};
pub use partition::{ArrayPartition, SubArrayGroup};
pub use ssd::{ssd_projection, SsdParams, SsdProjection, SsdSpec, SsdWorkload};
pub use systolic::{mac_utilization, mlp_cycles, systolic_cycles, weights_resident, SubArray};

/// Latency of stage `s` of `p` on its mapped device. Accelerator stages
/// need the design and are timed as part of the whole pipeline.
pub fn stage_latency(
    p: &PipelineConfig,
    s: usize,
    catalog: &Catalog,
    design: Option<&AccelDesign>,
) -> Result<StageLatency> {
    let stage = p
        .stages
        .get(s)
        .ok_or_else(|| Error::Precondition(format!("pipeline has no stage {s}")))?;
    let m = catalog.model(&stage.model)?;
    let hw = &catalog.hardware;
    match stage.device.kind() {
        DeviceKind::Cpu => Ok(cpu_stage_latency(stage, m, &hw.cpu)),
        DeviceKind::Gpu => Ok(gpu_stage_latency(stage, m, &hw.gpu, &hw.cpu)),
        DeviceKind::Accel => {
            let d = design.ok_or_else(|| {
                Error::Config(format!("stage {s} is mapped to the accelerator but no design was given"))
            })?;
            Ok(plan_accel(p, catalog, d)?.per_stage[s])
        }
    }
}

/// One row of the latency breakdown table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub pcie_s: f64,
    pub embedding_s: f64,
    pub mlp_s: f64,
    pub filter_s: f64,
    pub total_s: f64,
}

impl StageRecord {
    pub fn new(stage: impl Into<String>, l: &StageLatency) -> Self {
        StageRecord {
            stage: stage.into(),
            pcie_s: l.pcie_s,
            embedding_s: l.embedding_s,
            mlp_s: l.mlp_s,
            filter_s: l.filter_s,
            total_s: l.total_s,
        }
    }
}

pub fn write_breakdown_csv<W: Write>(records: &[StageRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in records {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}
