//! Static embedding cache: hit rates and average memory access time.
//!
//! The static cache pins the rows that were most frequent in a calibration
//! prefix of the trace and is evaluated on the remaining suffix.

use std::collections::HashMap;

use serde::Serialize;

use crate::catalog::{AccelSpec, ModelSpec};
use crate::error::{Error, Result};
use crate::trace::{zipf_top_share, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CacheStats {
    pub hit_rate: f64,
    pub amat_cycles: f64,
    pub accesses: u64,
}

impl CacheStats {
    pub fn from_hit_rate(hit_rate: f64, accesses: u64, accel: &AccelSpec) -> Self {
        CacheStats {
            hit_rate,
            amat_cycles: amat_cycles(hit_rate, accel),
            accesses,
        }
    }
}

/// DRAM latency plus the line transfer.
pub fn miss_cycles(accel: &AccelSpec) -> f64 {
    accel.dram_latency_cycles as f64
        + (accel.cache_line_bytes as f64 / accel.dram_bytes_per_cycle()).ceil()
}

pub fn amat_cycles(hit_rate: f64, accel: &AccelSpec) -> f64 {
    let h = hit_rate.clamp(0.0, 1.0);
    h * accel.sram_latency_cycles as f64 + (1.0 - h) * miss_cycles(accel)
}

/// Hit rate of a cache pinning the hottest rows of every table under
/// Zipf(`s`) popularity, capacity split evenly across tables.
pub fn analytic_hit_rate(capacity_bytes: u64, model: &ModelSpec, s: f64) -> f64 {
    let vectors = capacity_bytes / model.vector_bytes.max(1);
    let per_table = vectors / model.num_tables.max(1) as u64;
    zipf_top_share(per_table, model.rows_per_table, s)
}

/// Splits the static cache: stage 0 gets `frontend_fraction`, later stages
/// share the rest equally. A single stage gets everything.
pub fn static_split(static_bytes: u64, n_stages: usize, frontend_fraction: f64) -> Vec<u64> {
    match n_stages {
        0 => Vec::new(),
        1 => vec![static_bytes],
        n => {
            let front = (static_bytes as f64 * frontend_fraction.clamp(0.0, 1.0)).round() as u64;
            let rest = (static_bytes - front.min(static_bytes)) / (n as u64 - 1);
            std::iter::once(front).chain(std::iter::repeat_n(rest, n - 1)).collect()
        }
    }
}

/// Frequency ranking from the first half of a trace, with the rank
/// histogram of the second half.
#[derive(Debug, Clone)]
pub struct CacheProfile {
    /// `cum[c]` = suffix accesses whose row ranks below `c`.
    cum: Vec<u64>,
    suffix_len: u64,
    universe: u64,
}

impl CacheProfile {
    pub fn build(trace: &Trace) -> Result<Self> {
        if trace.records.is_empty() {
            return Err(Error::Precondition("empty access trace".into()));
        }
        let key = |a: &crate::trace::Access| a.table as u64 * trace.rows_per_table + a.row;
        let split = trace.records.len() / 2;
        let (prefix, suffix) = trace.records.split_at(split);

        let mut counts: HashMap<u64, u64> = HashMap::new();
        for a in prefix {
            *counts.entry(key(a)).or_default() += 1;
        }
        let mut ranked: Vec<(u64, u64)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let rank: HashMap<u64, usize> =
            ranked.iter().enumerate().map(|(i, &(k, _))| (k, i)).collect();

        let mut hist = vec![0u64; ranked.len()];
        for a in suffix {
            if let Some(&r) = rank.get(&key(a)) {
                hist[r] += 1;
            }
        }
        let mut cum = Vec::with_capacity(hist.len() + 1);
        cum.push(0);
        let mut acc = 0;
        for h in hist {
            acc += h;
            cum.push(acc);
        }
        Ok(CacheProfile {
            cum,
            suffix_len: suffix.len() as u64,
            universe: trace.n_tables as u64 * trace.rows_per_table,
        })
    }

    pub fn accesses(&self) -> u64 {
        self.suffix_len
    }

    /// Suffix hits with `capacity` vectors pinned.
    pub fn hits(&self, capacity: u64) -> u64 {
        if capacity >= self.universe {
            return self.suffix_len;
        }
        let c = (capacity as usize).min(self.cum.len() - 1);
        self.cum[c]
    }

    pub fn hit_rate(&self, capacity: u64) -> f64 {
        self.hits(capacity) as f64 / self.suffix_len as f64
    }
}

/// One stage's embedding accesses. `weight` scales its share of traffic
/// (e.g. a frontend that sees 8x more items).
#[derive(Debug, Clone, Copy)]
pub struct StageAccesses<'a> {
    pub trace: &'a Trace,
    pub vector_bytes: u64,
    pub weight: f64,
}

/// Pre-ranked per-stage profiles for sweeping cache splits cheaply.
#[derive(Debug, Clone)]
pub struct SplitSim {
    stages: Vec<(CacheProfile, u64, f64)>,
}

impl SplitSim {
    /// Fails when a line cannot hold a whole number of the stage's vectors.
    pub fn new(stages: &[StageAccesses<'_>], line_bytes: u64) -> Result<Self> {
        let stages = stages
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if s.vector_bytes == 0 || line_bytes < s.vector_bytes || line_bytes % s.vector_bytes != 0 {
                    return Err(Error::Config(format!(
                        "stage {i}: {}-byte vectors do not tile {line_bytes}-byte cache lines",
                        s.vector_bytes
                    )));
                }
                Ok((CacheProfile::build(s.trace)?, s.vector_bytes, s.weight))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SplitSim { stages })
    }

    pub fn run(&self, static_bytes: u64, frontend_fraction: f64, accel: &AccelSpec) -> Vec<CacheStats> {
        let split = static_split(static_bytes, self.stages.len(), frontend_fraction);
        self.stages
            .iter()
            .zip(split)
            .map(|((profile, vb, _), bytes)| {
                CacheStats::from_hit_rate(profile.hit_rate(bytes / vb), profile.accesses(), accel)
            })
            .collect()
    }

    /// AMAT averaged over stages by embedding bytes moved.
    pub fn combined_amat(&self, stats: &[CacheStats]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((_, vb, w), s) in self.stages.iter().zip(stats) {
            let bytes = s.accesses as f64 * *vb as f64 * w;
            num += bytes * s.amat_cycles;
            den += bytes;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

/// Per-stage cache statistics for a static cache of `static_bytes` split
/// between frontend and later stages.
pub fn embedding_access_sim(
    stages: &[StageAccesses<'_>],
    static_bytes: u64,
    line_bytes: u64,
    frontend_fraction: f64,
    accel: &AccelSpec,
) -> Result<Vec<CacheStats>> {
    if !(0.0..=1.0).contains(&frontend_fraction) {
        return Err(Error::Precondition(format!(
            "frontend fraction {frontend_fraction} outside [0, 1]"
        )));
    }
    Ok(SplitSim::new(stages, line_bytes)?.run(static_bytes, frontend_fraction, accel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{generate, TraceSpec};

    #[test]
    fn miss_cost_default() {
        let a = AccelSpec::default();
        assert_eq!(miss_cycles(&a), 101.0);
        assert_eq!(amat_cycles(1.0, &a), 2.0);
        assert_eq!(amat_cycles(0.0, &a), 101.0);
    }

    #[test]
    fn full_and_empty_cache() {
        let a = AccelSpec::default();
        let t = generate(&TraceSpec::new(1000, 1.0, 20_000, 1)).unwrap();
        let s = StageAccesses {
            trace: &t,
            vector_bytes: 128,
            weight: 1.0,
        };
        let full = embedding_access_sim(&[s], 1000 * 128, 128, 1.0, &a).unwrap();
        assert_eq!(full[0].hit_rate, 1.0);
        assert_eq!(full[0].amat_cycles, 2.0);
        let empty = embedding_access_sim(&[s], 0, 128, 1.0, &a).unwrap();
        assert_eq!(empty[0].hit_rate, 0.0);
        assert_eq!(empty[0].amat_cycles, 101.0);
        assert_eq!(empty[0].accesses, 10_000);
    }

    #[test]
    fn line_must_tile_vectors() {
        let a = AccelSpec::default();
        let t = generate(&TraceSpec::new(100, 1.0, 100, 1)).unwrap();
        let s = |vb| StageAccesses {
            trace: &t,
            vector_bytes: vb,
            weight: 1.0,
        };
        assert!(embedding_access_sim(&[s(256)], 1 << 20, 128, 0.5, &a).is_err());
        assert!(embedding_access_sim(&[s(48)], 1 << 20, 128, 0.5, &a).is_err());
        assert!(embedding_access_sim(&[s(16)], 1 << 20, 128, 0.5, &a).is_ok());
    }

    #[test]
    fn split_shares() {
        assert_eq!(static_split(100, 1, 0.3), vec![100]);
        assert_eq!(static_split(100, 2, 0.3), vec![30, 70]);
        assert_eq!(static_split(100, 3, 0.5), vec![50, 25, 25]);
    }

    #[test]
    fn sampled_hit_rate_tracks_analytic() {
        let t = generate(&TraceSpec::new(100_000, 1.0, 400_000, 2)).unwrap();
        let p = CacheProfile::build(&t).unwrap();
        let measured = p.hit_rate(1000);
        let analytic = zipf_top_share(1000, 100_000, 1.0);
        assert!((measured - analytic).abs() < 0.03, "{measured} vs {analytic}");
    }
}
