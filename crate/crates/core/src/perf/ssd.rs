//! Projection of embedding tables that outgrow DRAM onto an SSD tier.

use serde::{Deserialize, Serialize};

use crate::catalog::ModelSpec;
use crate::error::{Error, Result};
use crate::rng;
use crate::trace::{zipf_top_share, ZipfRows};

use super::accel::lookahead_effect;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsdSpec {
    /// Seconds per random read.
    pub latency_s: f64,
    pub bw: u64,
    /// Reads in flight.
    pub queue_depth: u32,
}

impl Default for SsdSpec {
    fn default() -> Self {
        SsdSpec {
            latency_s: 80e-6,
            bw: 3_200_000_000,
            queue_depth: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsdParams {
    /// Table rows are multiplied by this factor.
    pub scale: f64,
    pub dram_capacity_bytes: u64,
    pub zipf_exponent: f64,
    pub ssd: SsdSpec,
    /// Accesses in the miss-rate simulation.
    pub n_samples: u64,
    pub seed: u64,
}

/// Per-query embedding demand and the compute window that can hide it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsdWorkload {
    pub lookups_per_query: u64,
    /// Earlier-stage time available for prefetching.
    pub hide_window_s: f64,
    /// Query latency with everything in DRAM.
    pub base_latency_s: f64,
    pub n_sub: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SsdProjection {
    pub scale: f64,
    pub ssd_fraction: f64,
    pub dram_miss_rate: f64,
    pub overlapped_fraction: f64,
    pub latency_inflation: f64,
}

fn scaled_rows(model: &ModelSpec, scale: f64) -> u64 {
    (model.rows_per_table as f64 * scale).round().max(1.0) as u64
}

fn resident_rows(model: &ModelSpec, dram: u64) -> u64 {
    dram / (model.vector_bytes.max(1) * model.num_tables.max(1) as u64)
}

/// Share of table bytes that no longer fits DRAM.
pub fn ssd_fraction(model: &ModelSpec, scale: f64, dram: u64) -> f64 {
    let bytes = model.table_bytes() as f64 * scale;
    (1.0 - dram as f64 / bytes).clamp(0.0, 1.0)
}

/// Miss rate when DRAM pins the hottest rows of every table.
pub fn analytic_dram_miss_rate(model: &ModelSpec, scale: f64, dram: u64, s: f64) -> f64 {
    1.0 - zipf_top_share(resident_rows(model, dram), scaled_rows(model, scale), s)
}

/// Sampled miss rate over `n` Zipf draws on the rescaled tables.
pub fn simulated_dram_miss_rate(
    model: &ModelSpec,
    scale: f64,
    dram: u64,
    s: f64,
    n: u64,
    seed: u64,
) -> Result<f64> {
    let rows = scaled_rows(model, scale);
    let resident = resident_rows(model, dram);
    if resident >= rows {
        return Ok(0.0);
    }
    let zipf = ZipfRows::new(rows, s)?;
    let mut r = rng::stream(seed, &[rng::TAG_TRACE, scale.to_bits()]);
    let misses = (0..n).filter(|_| zipf.sample(&mut r) >= resident).count();
    Ok(misses as f64 / n.max(1) as f64)
}

pub fn ssd_projection(model: &ModelSpec, w: &SsdWorkload, p: &SsdParams) -> Result<SsdProjection> {
    if !(p.scale >= 1.0) {
        return Err(Error::Precondition(format!("scale {} < 1", p.scale)));
    }
    if p.n_samples == 0 || w.base_latency_s <= 0.0 {
        return Err(Error::Precondition("need samples and a positive base latency".into()));
    }
    let miss = simulated_dram_miss_rate(
        model,
        p.scale,
        p.dram_capacity_bytes,
        p.zipf_exponent,
        p.n_samples,
        p.seed,
    )?;
    let reads = w.lookups_per_query as f64 * miss;
    let per_read = p.ssd.latency_s / p.ssd.queue_depth.max(1) as f64
        + model.vector_bytes as f64 / p.ssd.bw as f64;
    let fetch = reads * per_read;
    let overlap = lookahead_effect(w.hide_window_s, fetch, w.n_sub);
    Ok(SsdProjection {
        scale: p.scale,
        ssd_fraction: ssd_fraction(model, p.scale, p.dram_capacity_bytes),
        dram_miss_rate: miss,
        overlapped_fraction: overlap,
        latency_inflation: (w.base_latency_s + fetch * (1.0 - overlap)) / w.base_latency_s,
    })
}
