//! Command implementations. Each writes its tables under `--out` and
//! returns the file names it produced.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use recpipe::desim::{simulate_plan, ServicePlan, SimOptions, Workload};
use recpipe::explore::{calibrated, evaluate, pareto_front, write_points_csv, Budgets, DesignSpace};
use recpipe::perf::{stage_latency, write_breakdown_csv, StageRecord};
use recpipe::quality::{calibrate_catalog, estimate_quality_batch};
use recpipe::trace::{generate, write_trace, zipf_top_share, TraceSpec};
use recpipe::resource_footprint;

use crate::config::Loaded;

pub struct Outcome {
    pub files: Vec<String>,
    /// Human-readable summary for stdout.
    pub summary: String,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn new(files: &[&str], summary: String) -> Self {
        Outcome {
            files: files.iter().map(|s| s.to_string()).collect(),
            summary,
            warnings: Vec::new(),
        }
    }
}

fn create(out: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = out.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_rows<T: Serialize>(out: &Path, name: &str, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(create(out, name)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct QualityRow {
    pipeline: String,
    stages: String,
    mean_ndcg: f64,
    stderr: f64,
    n_queries: usize,
    underflow_queries: usize,
    seed: u64,
}

pub fn quality(cfg: &Loaded, seed: u64, out: &Path) -> anyhow::Result<Outcome> {
    let catalog = calibrated(&cfg.catalog, &cfg.run.quality)?;
    let pipelines = cfg.quality_pipelines()?;
    let n = cfg.run.quality.n_queries as usize;
    let est = estimate_quality_batch::<f64>(&pipelines, &catalog, &cfg.run.quality, n, seed)?;
    let rows: Vec<QualityRow> = pipelines
        .iter()
        .zip(&est)
        .map(|(p, e)| QualityRow {
            pipeline: p.name.clone(),
            stages: p.label(),
            mean_ndcg: e.mean_ndcg,
            stderr: e.stderr,
            n_queries: e.n_queries,
            underflow_queries: e.underflow_queries,
            seed,
        })
        .collect();
    write_rows(out, "quality.csv", &rows)?;
    let summary = rows
        .iter()
        .map(|r| format!("{:<24} ndcg {:.3} ± {:.3}", r.stages, r.mean_ndcg, r.stderr))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome::new(&["quality.csv"], summary))
}

#[derive(Serialize)]
struct SimRow {
    pipeline: String,
    mapping: String,
    partition: String,
    qps: f64,
    arrivals: u64,
    completed: u64,
    dropped: u64,
    measured: u64,
    p50_s: f64,
    p99_s: f64,
    mean_s: f64,
    achieved_qps: f64,
    mean_in_system: f64,
    peak_utilization: f64,
    saturated: bool,
    seed: u64,
}

pub fn simulate(cfg: &Loaded, seed: u64, out: &Path) -> anyhow::Result<Outcome> {
    let run = &cfg.run;
    let opts: &SimOptions = &run.sim;
    let (plan, label, mapping, partition, breakdown) = match run.sim.service {
        Some(s) => (
            ServicePlan::single_server(run.sim.servers.unwrap_or(1), s.mean_s()),
            "service_override".to_string(),
            "-".to_string(),
            "-".to_string(),
            None,
        ),
        None => {
            let c = cfg.mapped("two_stage")?;
            let mut plan = ServicePlan::build(&c.pipeline, &cfg.catalog, c.design.as_ref())?;
            if let Some(n) = run.sim.servers {
                plan = plan.with_servers(n);
            }
            let records = (0..c.pipeline.stages.len())
                .map(|s| {
                    let l = stage_latency(&c.pipeline, s, &cfg.catalog, c.design.as_ref())?;
                    Ok(StageRecord::new(format!("{}:{}", s, c.pipeline.stages[s].model), &l))
                })
                .collect::<recpipe::Result<Vec<_>>>()?;
            (plan, c.pipeline.label(), c.mapping.clone(), c.partition_label(), Some(records))
        }
    };
    let mut rows = Vec::new();
    for &qps in &run.workload.qps {
        let w = Workload::for_queries(qps, run.workload.queries, seed);
        let s = simulate_plan(&plan, &w, opts)?.stats;
        rows.push(SimRow {
            pipeline: label.clone(),
            mapping: mapping.clone(),
            partition: partition.clone(),
            qps,
            arrivals: s.arrivals,
            completed: s.completed,
            dropped: s.dropped,
            measured: s.measured,
            p50_s: s.p50_s,
            p99_s: s.p99_s,
            mean_s: s.mean_s,
            achieved_qps: s.achieved_qps,
            mean_in_system: s.mean_in_system,
            peak_utilization: s.peak_utilization,
            saturated: s.saturated,
            seed,
        });
    }
    write_rows(out, "simulate.csv", &rows)?;
    let mut files = vec!["simulate.csv"];
    if let Some(records) = breakdown {
        write_breakdown_csv(&records, create(out, "breakdown.csv")?)?;
        files.push("breakdown.csv");
    }
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "{} qps {:.0}: p50 {:.3} ms, p99 {:.3} ms, achieved {:.1} qps{}",
                r.pipeline,
                r.qps,
                r.p50_s * 1e3,
                r.p99_s * 1e3,
                r.achieved_qps,
                if r.saturated { " (saturated)" } else { "" }
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome::new(&files, summary))
}

pub fn explore(cfg: &Loaded, space: &DesignSpace, seed: u64, out: &Path) -> anyhow::Result<Outcome> {
    let budgets: Budgets = cfg.run.budgets.clone().with_seed(seed);
    let e = evaluate(space, &cfg.catalog, &budgets)?;
    let front = pareto_front(&e.points);
    write_points_csv(&e.points, create(out, "points.csv")?)?;
    write_points_csv(&front, create(out, "frontier.csv")?)?;
    let mut o = Outcome::new(
        &["points.csv", "frontier.csv"],
        format!(
            "{} configs, {} quality evaluations, {} points, {} on the frontier",
            e.configs.len(),
            e.quality_evals,
            e.points.len(),
            front.len()
        ),
    );
    if e.points.is_empty() {
        o.warnings
            .push(format!("no configuration reaches quality floor {}", space.quality_floor));
    }
    Ok(o)
}

#[derive(Serialize)]
struct CalibrationRow {
    model: String,
    error_rate: f64,
    noise_sigma: f64,
}

pub fn calibrate(cfg: &Loaded, seed: u64, out: &Path) -> anyhow::Result<Outcome> {
    let mut catalog = cfg.catalog.clone();
    for m in &mut catalog.models {
        m.noise_sigma = None;
    }
    let mut q = cfg.run.quality.clone();
    q.calibration_seed = seed;
    calibrate_catalog(&mut catalog, &q)?;
    let rows: Vec<CalibrationRow> = catalog
        .models
        .iter()
        .map(|m| CalibrationRow {
            model: m.id.clone(),
            error_rate: m.error_rate,
            noise_sigma: m.noise_sigma.unwrap_or(f64::NAN),
        })
        .collect();
    write_rows(out, "calibration.csv", &rows)?;
    let mut w = create(out, "catalog.json")?;
    writeln!(w, "{}", catalog.to_json())?;
    w.flush()?;
    let summary = rows
        .iter()
        .map(|r| format!("{:<10} error {:.4} -> sigma {:.4}", r.model, r.error_rate, r.noise_sigma))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome::new(&["calibration.csv", "catalog.json"], summary))
}

#[derive(Serialize)]
struct TraceRow {
    top_fraction: f64,
    top_rows: u64,
    measured_share: f64,
    analytic_share: f64,
}

pub fn trace_gen(cfg: &Loaded, seed: Option<u64>, out: &Path) -> anyhow::Result<Outcome> {
    let mut spec = cfg
        .run
        .trace
        .clone()
        .unwrap_or_else(|| TraceSpec::new(1_000_000, 1.0, 1_000_000, 1));
    if let Some(s) = seed {
        spec.seed = s;
    }
    let trace = generate(&spec)?;
    write_trace(&trace, create(out, "trace.bin")?)?;
    let mut counts = vec![0u64; spec.n_rows.min(1 << 24) as usize];
    for a in &trace.records {
        if let Some(c) = counts.get_mut(a.row as usize) {
            *c += 1;
        }
    }
    let rows: Vec<TraceRow> = [0.001, 0.01, 0.1]
        .iter()
        .map(|&f| {
            let top = ((spec.n_rows as f64 * f).round() as u64).max(1);
            let hits: u64 = counts.iter().take(top as usize).sum();
            TraceRow {
                top_fraction: f,
                top_rows: top,
                measured_share: hits as f64 / trace.records.len().max(1) as f64,
                analytic_share: zipf_top_share(top, spec.n_rows, spec.zipf_exponent),
            }
        })
        .collect();
    write_rows(out, "trace_summary.csv", &rows)?;
    let summary = format!(
        "{} accesses over {} tables x {} rows (s = {}, seed {})",
        trace.records.len(),
        spec.n_tables,
        spec.n_rows,
        spec.zipf_exponent,
        spec.seed
    );
    Ok(Outcome::new(&["trace.bin", "trace_summary.csv"], summary))
}

#[derive(Serialize)]
struct FootprintRow {
    pipeline: String,
    stage: String,
    model: String,
    items_in: u32,
    flops: u64,
    embedding_bytes: u64,
}

pub fn footprint(cfg: &Loaded, out: &Path) -> anyhow::Result<Outcome> {
    let p = cfg.pipeline_or("two_stage")?;
    let base = cfg.pipeline_ref(
        cfg.run
            .baseline
            .as_ref()
            .unwrap_or(&crate::config::PipelineRef::Name("single_stage".into())),
    )?;
    let fp = resource_footprint(&p, &cfg.catalog)?;
    let fb = resource_footprint(&base, &cfg.catalog)?;
    let mut rows = Vec::new();
    for (pl, f) in [(&base, &fb), (&p, &fp)] {
        for (i, s) in f.per_stage.iter().enumerate() {
            rows.push(FootprintRow {
                pipeline: pl.label(),
                stage: i.to_string(),
                model: s.model.clone(),
                items_in: s.items_in,
                flops: s.flops,
                embedding_bytes: s.embedding_bytes,
            });
        }
        rows.push(FootprintRow {
            pipeline: pl.label(),
            stage: "total".into(),
            model: "-".into(),
            items_in: pl.items_in(),
            flops: f.total_flops,
            embedding_bytes: f.embedding_bytes,
        });
    }
    write_rows(out, "footprint.csv", &rows)?;
    let (cr, er) = fp.reduction_vs(&fb);
    let mut summary = format!("{:<36} {:>14} {:>16}\n", "pipeline", "flops/query", "embed bytes/query");
    for (pl, f) in [(&base, &fb), (&p, &fp)] {
        summary += &format!("{:<36} {:>14} {:>16}\n", pl.label(), f.total_flops, f.embedding_bytes);
    }
    summary += &format!("compute reduction {cr:.2}x, embedding reduction {er:.2}x");
    Ok(Outcome::new(&["footprint.csv"], summary))
}
