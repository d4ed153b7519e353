//! Accelerator query latency: sub-batch pipelining across sub-array groups,
//! embedding gathers through the static and look-ahead caches, and the
//! on-chip top-k filter.

use serde::{Deserialize, Serialize};

use crate::catalog::{validate_pipeline, AccelSpec, Catalog, FilterMode, PipelineConfig};
use crate::error::{Error, Result};

use super::cache::{amat_cycles, analytic_hit_rate, static_split};
use super::host::{host_filter_time, pcie_time, query_input_bytes, StageLatency, ID_BYTES, SCORED_ID_BYTES};
use super::partition::ArrayPartition;
use super::systolic::{mac_utilization, mlp_cycles, weights_resident};

/// Bin scan plus id copy-out; insertion overlaps the MLP drain.
pub fn filter_cycles(n_forwarded: u64, n_bins: u32) -> u64 {
    n_bins as u64 + n_forwarded
}

/// Fraction of a later stage's embedding fetch hidden behind the previous
/// stage's sub-batch compute.
pub fn lookahead_effect(frontend_slice_s: f64, backend_fetch_s: f64, n_sub: u32) -> f64 {
    if n_sub < 2 {
        return 0.0;
    }
    if backend_fetch_s <= 0.0 {
        return 1.0;
    }
    (frontend_slice_s / backend_fetch_s).clamp(0.0, 1.0)
}

/// An accelerator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelDesign {
    pub partition: ArrayPartition,
    /// Prefetch later-stage embeddings into the look-ahead cache.
    pub lookahead: bool,
    /// Scores cross PCIe for top-k on the host after every stage.
    pub host_filter: bool,
    /// Popularity skew assumed for cache hit rates.
    pub zipf_exponent: f64,
}

impl AccelDesign {
    /// Monolithic array, host-side filtering, whole cache static.
    pub fn baseline(accel: &AccelSpec) -> Self {
        AccelDesign {
            partition: ArrayPartition::monolithic(accel),
            lookahead: false,
            host_filter: true,
            zipf_exponent: 1.0,
        }
    }

    /// Partitioned array with on-chip filtering and look-ahead prefetch.
    pub fn rpaccel(partition: ArrayPartition) -> Self {
        AccelDesign {
            partition,
            lookahead: true,
            host_filter: false,
            zipf_exponent: 1.0,
        }
    }

    pub fn label(&self) -> String {
        if self.host_filter {
            format!("baseline:{}", self.partition)
        } else {
            format!("rpaccel:{}", self.partition)
        }
    }
}

/// When a task may start relative to the task before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ready {
    /// As soon as the previous task's first slice is done.
    FirstSlice,
    /// After the previous task finishes.
    AllSlices,
}

/// Work one sub-array performs for one query. Slice `j` also waits for
/// slice `j` of the previous task when `ready` is `FirstSlice`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccelTask {
    pub group: usize,
    pub ready: Ready,
    /// Seconds per slice.
    pub slices: Vec<f64>,
    /// Pipeline stage of each slice.
    pub slice_stage: Vec<usize>,
}

impl AccelTask {
    /// Slice end times for a task started at `start`.
    pub fn run(&self, start: f64, prev_ends: Option<&[f64]>) -> Vec<f64> {
        let mut t = start;
        let mut ends = Vec::with_capacity(self.slices.len());
        for (j, d) in self.slices.iter().enumerate() {
            if let (Ready::FirstSlice, Some(prev)) = (self.ready, prev_ends) {
                if let Some(&p) = prev.get(j).or(prev.last()) {
                    t = t.max(p);
                }
            }
            t += d;
            ends.push(t);
        }
        ends
    }

    /// Earliest start once the previous task's slice ends are known.
    pub fn ready_at(&self, prev_ends: &[f64]) -> f64 {
        match self.ready {
            Ready::FirstSlice => prev_ends.first().copied().unwrap_or(0.0),
            Ready::AllSlices => prev_ends.last().copied().unwrap_or(0.0),
        }
    }

    pub fn busy_s(&self) -> f64 {
        self.slices.iter().sum()
    }
}

/// Everything the simulator needs to time one query on the accelerator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccelPlan {
    /// Host-to-device input transfer.
    pub input_s: f64,
    pub tasks: Vec<AccelTask>,
    /// Final filter and result transfer after the last task.
    pub tail_s: f64,
    /// Parallel sub-arrays per group.
    pub servers: Vec<u32>,
    pub per_stage: Vec<StageLatency>,
    /// Modeled MAC utilization of each stage on its sub-array.
    pub utilization: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GanttEntry {
    pub stage: usize,
    pub slice: usize,
    pub group: usize,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccelLatency {
    pub total_s: f64,
    pub per_stage: Vec<StageLatency>,
    pub gantt: Vec<GanttEntry>,
}

impl AccelPlan {
    /// Timeline of one query on an idle accelerator.
    pub fn unloaded(&self) -> AccelLatency {
        let mut gantt = Vec::new();
        let mut prev: Option<Vec<f64>> = None;
        for task in &self.tasks {
            let start = prev.as_deref().map_or(self.input_s, |p| task.ready_at(p));
            let ends = task.run(start, prev.as_deref());
            for (j, &end) in ends.iter().enumerate() {
                gantt.push(GanttEntry {
                    stage: task.slice_stage[j],
                    slice: j,
                    group: task.group,
                    start_s: end - task.slices[j],
                    end_s: end,
                });
            }
            prev = Some(ends);
        }
        let last = prev.and_then(|e| e.last().copied()).unwrap_or(self.input_s);
        AccelLatency {
            total_s: last + self.tail_s,
            per_stage: self.per_stage.clone(),
            gantt,
        }
    }

    pub fn mean_utilization(&self) -> f64 {
        self.utilization.iter().sum::<f64>() / self.utilization.len().max(1) as f64
    }
}

/// Builds the per-query plan for `p` on `design`.
///
/// Stage 0's `sub_batches` sets the number of slices every stage is
/// pipelined over.
pub fn plan_accel(p: &PipelineConfig, catalog: &Catalog, design: &AccelDesign) -> Result<AccelPlan> {
    validate_pipeline(p, catalog)?;
    let accel = &catalog.hardware.accel;
    let cpu = &catalog.hardware.cpu;
    let n = p.stages.len();
    let part = &design.partition;
    part.validate(accel, n)?;
    let shared = part.is_shared();
    let n_slices = p.stages[0].sub_batches.max(1);
    let freq = accel.freq_hz as f64;
    let bpc = accel.dram_bytes_per_cycle();
    let pcie = |bytes: u64| pcie_time(bytes, accel.pcie_bw, accel.pcie_fixed_latency);

    let static_bytes = if design.lookahead {
        accel.static_cache_bytes()
    } else {
        accel.embed_cache_bytes
    };
    let split = static_split(static_bytes, n, accel.static_frontend_fraction);

    let mut per_stage = Vec::with_capacity(n);
    let mut utilization = Vec::with_capacity(n);
    let mut stage_slices: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut final_filter_s = 0.0;
    let mut prev_slice_s = 0.0;

    for (s, stage) in p.stages.iter().enumerate() {
        let m = catalog.model(&stage.model)?;
        let g = part.group_of(s)?;
        let shape = part.groups[g].shape;
        let resident = weights_resident(m, part.sram_share(g, accel));
        let items = stage.items_in.div_ceil(n_slices);
        let last = s + 1 == n;

        let mlp = mlp_cycles(m, items, shape, resident, bpc)? as f64 / freq;
        utilization.push(mac_utilization(m, items, shape, resident, bpc)?);

        let hit = analytic_hit_rate(split[s], m, design.zipf_exponent);
        let lookups = items as f64 * m.lookups_per_item() as f64;
        let mut embedding =
            lookups * amat_cycles(hit, accel) / accel.gather_parallelism.max(1) as f64 / freq;
        if s > 0 && !shared && design.lookahead {
            let prefetch = lookups * m.vector_bytes as f64;
            let room = (accel.lookahead_cache_bytes as f64 / prefetch).min(1.0);
            embedding *= 1.0 - lookahead_effect(prev_slice_s, embedding, n_slices) * room;
        }

        let mut pcie_s = 0.0;
        let mut slice_filter = 0.0;
        let mut stage_filter = 0.0;
        if design.host_filter {
            // scores out, host top-k, ids back unless this is the last stage
            let mut round = pcie(stage.items_in as u64 * SCORED_ID_BYTES);
            if !last {
                round += pcie(stage.items_out as u64 * ID_BYTES);
            }
            pcie_s += round;
            stage_filter = host_filter_time(stage.items_in, cpu);
        } else if last {
            final_filter_s = filter_cycles(stage.items_out as u64, accel.filter_bins) as f64 / freq;
            stage_filter = final_filter_s;
        } else {
            let fwd = stage.items_out.div_ceil(n_slices) as u64;
            slice_filter = filter_cycles(fwd, accel.filter_bins) as f64 / freq;
        }

        let slice_s = mlp + embedding + slice_filter;
        let mut slices = vec![slice_s; n_slices as usize];
        if design.host_filter {
            *slices.last_mut().expect("n_slices >= 1") += pcie_s + stage_filter;
        }
        prev_slice_s = slice_s;
        stage_slices.push(slices);

        let k = n_slices as f64;
        let mut lat = StageLatency::new(pcie_s, embedding * k, mlp * k, slice_filter * k + stage_filter);
        if s == 0 {
            lat = lat.add(&StageLatency::new(pcie(query_input_bytes(m, stage.items_in)), 0.0, 0.0, 0.0));
        }
        if last && !design.host_filter {
            lat = lat.add(&StageLatency::new(pcie(p.serve_count as u64 * SCORED_ID_BYTES), 0.0, 0.0, 0.0));
        }
        per_stage.push(lat);
    }

    let tasks = if shared {
        let mut slices = Vec::new();
        let mut slice_stage = Vec::new();
        for (s, v) in stage_slices.into_iter().enumerate() {
            slice_stage.extend(std::iter::repeat_n(s, v.len()));
            slices.extend(v);
        }
        vec![AccelTask {
            group: 0,
            ready: Ready::AllSlices,
            slices,
            slice_stage,
        }]
    } else {
        let ready = if design.host_filter {
            Ready::AllSlices
        } else {
            Ready::FirstSlice
        };
        stage_slices
            .into_iter()
            .enumerate()
            .map(|(s, slices)| {
                Ok(AccelTask {
                    group: part.group_of(s)?,
                    ready,
                    slice_stage: vec![s; slices.len()],
                    slices,
                })
            })
            .collect::<Result<Vec<_>>>()?
    };

    let m0 = catalog.model(&p.stages[0].model)?;
    let tail_s = if design.host_filter {
        0.0
    } else {
        final_filter_s + pcie(p.serve_count as u64 * SCORED_ID_BYTES)
    };
    Ok(AccelPlan {
        input_s: pcie(query_input_bytes(m0, p.stages[0].items_in)),
        tasks,
        tail_s,
        servers: part.groups.iter().map(|g| g.n_subarrays).collect(),
        per_stage,
        utilization,
    })
}

/// End-to-end latency of one query on an idle accelerator.
pub fn accel_query_latency(
    p: &PipelineConfig,
    catalog: &Catalog,
    design: &AccelDesign,
) -> Result<AccelLatency> {
    Ok(plan_accel(p, catalog, design)?.unloaded())
}

/// Sets every non-final stage to `n_sub` slices with the bucket filter.
pub fn with_sub_batches(p: &PipelineConfig, n_sub: u32) -> Result<PipelineConfig> {
    if n_sub == 0 {
        return Err(Error::Precondition("n_sub must be >= 1".into()));
    }
    let mut q = p.clone();
    let n = q.stages.len();
    for s in q.stages.iter_mut().take(n.saturating_sub(1)) {
        s.sub_batches = n_sub;
        s.filter = FilterMode::BucketFilter;
    }
    Ok(q)
}
