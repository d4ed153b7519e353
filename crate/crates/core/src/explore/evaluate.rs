//! Quality and latency evaluation of every configuration in a design space.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{resource_footprint, Catalog, Device, PipelineConfig};
use crate::desim::{simulate_plan, ServicePlan, SimOptions, Workload};
use crate::error::{Error, Result};
use crate::quality::{calibrate_catalog, estimate_quality_batch, QualityConfig};

use super::pareto::pareto_indices;
use super::space::{enumerate, Config, DesignSpace};

/// Monte Carlo and simulation effort per evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub n_queries: usize,
    /// Simulated arrivals per (config, qps) point.
    pub sim_queries: u64,
    pub quality_seed: u64,
    pub sim_seed: u64,
    pub quality: QualityConfig,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            n_queries: 2000,
            sim_queries: 20_000,
            quality_seed: 1,
            sim_seed: 2,
            quality: QualityConfig::default(),
        }
    }
}

impl Budgets {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.quality_seed = seed;
        self.sim_seed = seed.wrapping_add(1);
        self
    }
}

/// One (configuration, load) point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub config_id: usize,
    pub pipeline: String,
    pub mapping: String,
    pub partition: String,
    pub n_sub: u32,
    pub qps: f64,
    pub mean_ndcg: f64,
    pub ndcg_stderr: f64,
    pub p50_s: f64,
    pub p99_s: f64,
    pub mean_s: f64,
    pub achieved_qps: f64,
    pub saturated: bool,
    pub unloaded_s: f64,
    pub capacity_qps: f64,
    pub total_flops: u64,
    pub embedding_bytes: u64,
    pub quality_seed: u64,
    pub sim_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub configs: Vec<Config>,
    pub points: Vec<EvalPoint>,
    /// Distinct algorithmic funnels whose quality was estimated.
    pub quality_evals: usize,
}

/// Hardware-independent part of a pipeline.
pub fn algorithmic_key(p: &PipelineConfig) -> PipelineConfig {
    let mut q = p.clone();
    q.name.clear();
    for s in &mut q.stages {
        s.device = Device::Cpu;
    }
    q
}

fn memo_key(p: &PipelineConfig) -> String {
    serde_json::to_string(&algorithmic_key(p)).expect("pipeline serializes")
}

/// Returns `catalog` with every missing noise sigma calibrated.
pub fn calibrated(catalog: &Catalog, cfg: &QualityConfig) -> Result<Catalog> {
    let mut c = catalog.clone();
    if c.models.iter().any(|m| m.noise_sigma.is_none()) {
        calibrate_catalog(&mut c, cfg)?;
    }
    Ok(c)
}

/// Quality per distinct funnel, then one simulation per surviving
/// (config, qps) pair. Configs below the quality floor are dropped.
pub fn evaluate(space: &DesignSpace, catalog: &Catalog, budgets: &Budgets) -> Result<Evaluation> {
    let catalog = calibrated(catalog, &budgets.quality)?;
    let configs = enumerate(space, &catalog)?;
    if budgets.sim_queries == 0 {
        return Err(Error::Precondition("sim_queries must be >= 1".into()));
    }

    let mut memo: BTreeMap<String, usize> = BTreeMap::new();
    let mut unique = Vec::new();
    for c in &configs {
        memo.entry(memo_key(&c.pipeline)).or_insert_with(|| {
            unique.push(algorithmic_key(&c.pipeline));
            unique.len() - 1
        });
    }
    let quality = if unique.is_empty() {
        Vec::new()
    } else {
        estimate_quality_batch::<f64>(&unique, &catalog, &budgets.quality, budgets.n_queries, budgets.quality_seed)?
    };

    let mut jobs = Vec::new();
    for c in &configs {
        let q = quality[memo[&memo_key(&c.pipeline)]];
        if q.mean_ndcg < space.quality_floor {
            continue;
        }
        let plan = ServicePlan::build(&c.pipeline, &catalog, c.design.as_ref())?;
        let fp = resource_footprint(&c.pipeline, &catalog)?;
        for &qps in &space.qps {
            jobs.push((c, q, plan.clone(), fp.total_flops, fp.embedding_bytes, qps));
        }
    }
    let opts = SimOptions::default();
    let points = jobs
        .par_iter()
        .map(|(c, q, plan, flops, bytes, qps)| {
            let w = Workload::for_queries(*qps, budgets.sim_queries, budgets.sim_seed);
            let s = simulate_plan(plan, &w, &opts)?.stats;
            Ok(EvalPoint {
                config_id: c.id,
                pipeline: c.pipeline.label(),
                mapping: c.mapping.clone(),
                partition: c.partition_label(),
                n_sub: c.n_sub,
                qps: *qps,
                mean_ndcg: q.mean_ndcg,
                ndcg_stderr: q.stderr,
                p50_s: s.p50_s,
                p99_s: s.p99_s,
                mean_s: s.mean_s,
                achieved_qps: s.achieved_qps,
                saturated: s.saturated,
                unloaded_s: plan.unloaded_latency(),
                capacity_qps: plan.capacity_qps(),
                total_flops: *flops,
                embedding_bytes: *bytes,
                quality_seed: budgets.quality_seed,
                sim_seed: budgets.sim_seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        configs,
        points,
        quality_evals: unique.len(),
    })
}

/// Non-dominated points under (min p99, max achieved qps, max ndcg),
/// ordered by ndcg descending then p99 ascending.
pub fn pareto_front(points: &[EvalPoint]) -> Vec<EvalPoint> {
    let objs: Vec<[f64; 3]> = points
        .iter()
        .map(|p| [-p.p99_s, p.achieved_qps, p.mean_ndcg])
        .collect();
    let mut front: Vec<EvalPoint> = pareto_indices(&objs).into_iter().map(|i| points[i].clone()).collect();
    front.sort_by(|a, b| {
        b.mean_ndcg
            .total_cmp(&a.mean_ndcg)
            .then(a.p99_s.total_cmp(&b.p99_s))
    });
    front
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutAxis {
    /// `mean_ndcg >= target - tol`.
    Quality,
    /// Offered load within `tol` of target.
    Qps,
    /// p99 within `tol` seconds of target.
    Latency,
}

pub fn iso_cut(points: &[EvalPoint], axis: CutAxis, target: f64, tol: f64) -> Result<Vec<EvalPoint>> {
    if !(tol >= 0.0) {
        return Err(Error::Precondition(format!("tolerance {tol} < 0")));
    }
    let keep = |p: &EvalPoint| match axis {
        CutAxis::Quality => p.mean_ndcg >= target - tol,
        CutAxis::Qps => (p.qps - target).abs() <= tol,
        CutAxis::Latency => (p.p99_s - target).abs() <= tol,
    };
    Ok(points.iter().filter(|p| keep(p)).cloned().collect())
}

/// Highest load in `[lo, hi]` whose simulated p99 stays under `sla_s`,
/// by bisection to a relative width of `rel_tol`. Returns 0 when even
/// `lo` misses the SLA.
pub fn max_qps_under_sla(
    plan: &ServicePlan,
    sla_s: f64,
    lo: f64,
    hi: f64,
    sim_queries: u64,
    seed: u64,
    rel_tol: f64,
) -> Result<f64> {
    if !(lo > 0.0 && hi > lo && rel_tol > 0.0) {
        return Err(Error::Precondition("need 0 < lo < hi and rel_tol > 0".into()));
    }
    let opts = SimOptions::default();
    let meets = |qps: f64| -> Result<bool> {
        let s = simulate_plan(plan, &Workload::for_queries(qps, sim_queries, seed), &opts)?.stats;
        Ok(!s.saturated && s.p99_s <= sla_s)
    };
    if !meets(lo)? {
        return Ok(0.0);
    }
    if meets(hi)? {
        return Ok(hi);
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > rel_tol * a {
        let m = 0.5 * (a + b);
        if meets(m)? {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(a)
}

pub fn write_points_csv<W: Write>(points: &[EvalPoint], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    if points.is_empty() {
        wr.write_record(POINT_COLUMNS)?;
    }
    for p in points {
        wr.serialize(p)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_points_csv<R: Read>(r: R) -> Result<Vec<EvalPoint>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Header of the evaluation CSV.
pub const POINT_COLUMNS: [&str; 19] = [
    "config_id",
    "pipeline",
    "mapping",
    "partition",
    "n_sub",
    "qps",
    "mean_ndcg",
    "ndcg_stderr",
    "p50_s",
    "p99_s",
    "mean_s",
    "achieved_qps",
    "saturated",
    "unloaded_s",
    "capacity_qps",
    "total_flops",
    "embedding_bytes",
    "quality_seed",
    "sim_seed",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explore::space::{MappingKind, PartitionSpec};

    fn quick() -> Budgets {
        Budgets {
            n_queries: 50,
            sim_queries: 2000,
            quality: QualityConfig {
                n_mc: 20_000,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn shared_tuple_evaluated_once() {
        let c = Catalog::default_catalog();
        let s = DesignSpace {
            max_stages: 1,
            models: vec!["RM_large".into()],
            item_grid: vec![4096],
            mappings: vec![MappingKind::AllCpu, MappingKind::AccelBaseline],
            partitions: vec![PartitionSpec::Mono],
            qps: vec![100.0],
            ..Default::default()
        };
        let e = evaluate(&s, &c, &quick()).unwrap();
        assert_eq!(e.quality_evals, 1);
        assert_eq!(e.points.len(), 2);
        assert_eq!(e.points[0].mean_ndcg, e.points[1].mean_ndcg);
        assert!(e.points[1].p99_s < e.points[0].p99_s);
    }

    #[test]
    fn unreachable_floor_is_empty() {
        let c = Catalog::default_catalog();
        let s = DesignSpace {
            quality_floor: 99.9,
            ..DesignSpace::tiny()
        };
        let e = evaluate(&s, &c, &quick()).unwrap();
        assert!(e.points.is_empty());
        let mut out = Vec::new();
        write_points_csv(&e.points, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().trim(), POINT_COLUMNS.join(","));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let c = Catalog::default_catalog();
        let e = evaluate(&DesignSpace::tiny(), &c, &quick()).unwrap();
        assert_eq!(e.points.len(), 3);
        let mut out = Vec::new();
        write_points_csv(&e.points, &mut out).unwrap();
        assert!(String::from_utf8_lossy(&out).starts_with(&POINT_COLUMNS.join(",")));
        assert_eq!(read_points_csv(&out[..]).unwrap(), e.points);
    }

    #[test]
    fn cuts() {
        let c = Catalog::default_catalog();
        let pts = evaluate(&DesignSpace::tiny(), &c, &quick()).unwrap().points;
        let one = iso_cut(&pts, CutAxis::Latency, pts[1].p99_s, 0.0).unwrap();
        assert_eq!(one, vec![pts[1].clone()]);
        assert!(iso_cut(&pts, CutAxis::Quality, 100.5, 0.0).unwrap().is_empty());
        assert_eq!(iso_cut(&pts, CutAxis::Qps, 200.0, 0.0).unwrap().len(), 3);
        assert!(iso_cut(&pts, CutAxis::Qps, 200.0, -1.0).is_err());
        assert_eq!(pareto_front(&pts[..1]), vec![pts[0].clone()]);
    }

    #[test]
    fn sla_bisection_brackets_capacity() {
        let c = Catalog::default_catalog();
        let p = PipelineConfig::new(vec![crate::catalog::StageConfig::new("RM_large", 4096, 64)]);
        let plan = ServicePlan::build(&p, &c, None).unwrap();
        let cap = plan.capacity_qps();
        let q = max_qps_under_sla(&plan, 6e-3, 1.0, 10.0 * cap, 5000, 3, 0.02).unwrap();
        assert!(q > 0.5 * cap && q < 1.05 * cap, "{q} vs {cap}");
        assert_eq!(max_qps_under_sla(&plan, 1e-6, 1.0, 2.0, 100, 3, 0.1).unwrap(), 0.0);
    }
}
