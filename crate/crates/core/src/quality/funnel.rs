//! Multi-stage funnel execution and Monte Carlo quality estimation.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{validate_pipeline, Catalog, PipelineConfig};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

use super::filter::{rank_order, stitch, BucketParams, Scored};
use super::metric::{ideal_dcg, ndcg_with_ideal};
use super::noise::{calibrate_noise, noisy_score};
use super::query::{gen_query_with, QueryInstance, RelevanceDist};

fn default_pool() -> u32 {
    4096
}

fn default_queries() -> u32 {
    10_000
}

fn default_n_mc() -> u32 {
    1_000_000
}

/// Settings shared by every quality estimate of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityConfig {
    pub relevance: RelevanceDist,
    /// Candidates generated per query. Stage 1 ranks the first `items_in`
    /// of them; the ideal ordering always spans the whole pool.
    #[serde(default = "default_pool")]
    pub pool_size: u32,
    #[serde(default = "default_queries")]
    pub n_queries: u32,
    #[serde(default = "default_n_mc")]
    pub n_mc: u32,
    pub calibration_seed: u64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            relevance: RelevanceDist::default(),
            pool_size: default_pool(),
            n_queries: default_queries(),
            n_mc: default_n_mc(),
            calibration_seed: 0,
        }
    }
}

/// Fills every missing `noise_sigma` by calibration. All models share one
/// Monte Carlo sample, so the sigma ordering follows the error ordering.
pub fn calibrate_catalog(catalog: &mut Catalog, cfg: &QualityConfig) -> Result<()> {
    for m in &mut catalog.models {
        if m.noise_sigma.is_none() {
            m.noise_sigma = Some(calibrate_noise(
                m.error_rate,
                &cfg.relevance,
                cfg.n_mc as usize,
                cfg.calibration_seed,
            )?);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunnelOutcome {
    /// Served ids, best first.
    pub served: Vec<u32>,
    /// Items forwarded by each stage.
    pub forwarded: Vec<usize>,
    /// Some stage received fewer items than it was configured to keep.
    pub underflow: bool,
}

/// Per-stage noise and filter settings resolved from a catalog.
#[derive(Debug, Clone)]
pub struct FunnelParams<T> {
    pub sigmas: Vec<T>,
    pub bucket: BucketParams<T>,
}

impl<T: Scalar> FunnelParams<T> {
    pub fn resolve(p: &PipelineConfig, catalog: &Catalog) -> Result<Self> {
        let sigmas = p
            .stages
            .iter()
            .map(|s| {
                let m = catalog.model(&s.model)?;
                m.noise_sigma.map(T::lit).ok_or_else(|| {
                    Error::Precondition(format!("model `{}` has no calibrated noise_sigma", m.id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let a = &catalog.hardware.accel;
        Ok(FunnelParams {
            sigmas,
            bucket: BucketParams {
                n_bins: a.filter_bins,
                threshold: T::lit(a.ctr_threshold),
            },
        })
    }
}

/// Runs one query through the funnel. `q` must hold at least stage 1's
/// `items_in` candidates; the first `items_in` are ranked.
pub fn run_funnel<T: Scalar>(
    p: &PipelineConfig,
    catalog: &Catalog,
    q: &QueryInstance<T>,
    seed: u64,
) -> Result<FunnelOutcome> {
    validate_pipeline(p, catalog)?;
    if q.len() < p.items_in() as usize {
        return Err(Error::Precondition(format!(
            "query has {} items, stage 1 needs {}",
            q.len(),
            p.items_in()
        )));
    }
    let params = FunnelParams::resolve(p, catalog)?;
    Ok(run_funnel_with(p, &params, q, seed))
}

/// Funnel core without validation.
pub fn run_funnel_with<T: Scalar>(
    p: &PipelineConfig,
    params: &FunnelParams<T>,
    q: &QueryInstance<T>,
    seed: u64,
) -> FunnelOutcome {
    let n1 = p.items_in() as usize;
    let mut candidates: Vec<u32> = (0..n1 as u32).collect();
    let mut forwarded = Vec::with_capacity(p.stages.len());
    let mut underflow = false;
    let mut z = vec![T::zero(); n1];
    let mut last: Vec<Scored<T>> = Vec::new();

    for (s, stage) in p.stages.iter().enumerate() {
        let sigma = params.sigmas[s];
        if sigma > T::zero() {
            // indexed by item id, so an item's draw does not depend on
            // which other items survived
            let mut r = rng::stream(seed, &[rng::TAG_STAGE, q.query_id, s as u64]);
            for zi in z.iter_mut() {
                let v: f64 = StandardNormal.sample(&mut r);
                *zi = T::lit(v);
            }
        }
        let scored: Vec<Scored<T>> = candidates
            .iter()
            .map(|&id| Scored {
                id,
                score: noisy_score(q.relevance[id as usize], sigma, z[id as usize]),
            })
            .collect();
        let out = stitch(
            &scored,
            stage.items_out as usize,
            stage.sub_batches as usize,
            stage.filter,
            &params.bucket,
        );
        underflow |= out.underflow || scored.len() < stage.items_in as usize;
        forwarded.push(out.items.len());
        candidates = out.items.iter().map(|s| s.id).collect();
        candidates.sort_unstable();
        last = out.items;
    }

    last.sort_unstable_by(rank_order);
    last.truncate(p.serve_count as usize);
    FunnelOutcome {
        served: last.into_iter().map(|s| s.id).collect(),
        forwarded,
        underflow,
    }
}

/// Mean NDCG with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QualityEstimate<T> {
    pub mean_ndcg: T,
    pub stderr: T,
    pub n_queries: usize,
    /// Queries in which some bucket filter under-delivered.
    pub underflow_queries: usize,
}

fn summarize<T: Scalar>(samples: &[(T, bool)]) -> QualityEstimate<T> {
    let n = samples.len();
    let nt = T::lit(n as f64);
    let mean = samples.iter().fold(T::zero(), |a, s| a + s.0) / nt;
    let stderr = if n > 1 {
        let ss = samples
            .iter()
            .fold(T::zero(), |a, s| a + (s.0 - mean) * (s.0 - mean));
        (ss / T::lit((n - 1) as f64)).sqrt() / nt.sqrt()
    } else {
        T::zero()
    };
    QualityEstimate {
        mean_ndcg: mean,
        stderr,
        n_queries: n,
        underflow_queries: samples.iter().filter(|s| s.1).count(),
    }
}

/// Monte Carlo NDCG over `n_queries` synthetic queries.
///
/// Query `i` and its scoring noise derive from `(seed, i)` only, so the
/// result does not depend on the rayon pool size.
pub fn estimate_quality<T: Scalar>(
    p: &PipelineConfig,
    catalog: &Catalog,
    cfg: &QualityConfig,
    n_queries: usize,
    seed: u64,
) -> Result<QualityEstimate<T>> {
    validate_pipeline(p, catalog)?;
    if n_queries == 0 {
        return Err(Error::Precondition("n_queries must be >= 1".into()));
    }
    let params = FunnelParams::<T>::resolve(p, catalog)?;
    let pool = (cfg.pool_size.max(p.items_in())) as usize;
    let sampler = cfg.relevance.sampler()?;
    let serve = p.serve_count as usize;
    let samples: Vec<(T, bool)> = (0..n_queries as u64)
        .into_par_iter()
        .map(|qid| {
            let q = gen_query_with::<T>(seed, qid, pool, &sampler, None);
            let out = run_funnel_with(p, &params, &q, seed);
            let ideal = ideal_dcg(&q.relevance, serve);
            (ndcg_with_ideal(&out.served, &q.relevance, serve, ideal), out.underflow)
        })
        .collect();
    Ok(summarize(&samples))
}

/// [`estimate_quality`] for many pipelines over one shared query stream.
///
/// Results are identical to evaluating each pipeline on its own.
pub fn estimate_quality_batch<T: Scalar>(
    pipelines: &[PipelineConfig],
    catalog: &Catalog,
    cfg: &QualityConfig,
    n_queries: usize,
    seed: u64,
) -> Result<Vec<QualityEstimate<T>>> {
    if n_queries == 0 {
        return Err(Error::Precondition("n_queries must be >= 1".into()));
    }
    let mut params = Vec::with_capacity(pipelines.len());
    for p in pipelines {
        validate_pipeline(p, catalog)?;
        params.push(FunnelParams::<T>::resolve(p, catalog)?);
    }
    let sampler = cfg.relevance.sampler()?;
    let pool_of = |p: &PipelineConfig| (cfg.pool_size.max(p.items_in())) as usize;

    let mut pools: Vec<usize> = pipelines.iter().map(pool_of).collect();
    pools.sort_unstable();
    pools.dedup();
    let mut out: Vec<Option<QualityEstimate<T>>> = vec![None; pipelines.len()];
    for pool in pools {
        let members: Vec<usize> = (0..pipelines.len())
            .filter(|&i| pool_of(&pipelines[i]) == pool)
            .collect();
        let rows: Vec<Vec<(T, bool)>> = (0..n_queries as u64)
            .into_par_iter()
            .map(|qid| {
                let q = gen_query_with::<T>(seed, qid, pool, &sampler, None);
                let mut ideal: Vec<(usize, T)> = Vec::new();
                members
                    .iter()
                    .map(|&i| {
                        let p = &pipelines[i];
                        let serve = p.serve_count as usize;
                        let id = match ideal.iter().find(|(n, _)| *n == serve) {
                            Some(&(_, v)) => v,
                            None => {
                                let v = ideal_dcg(&q.relevance, serve);
                                ideal.push((serve, v));
                                v
                            }
                        };
                        let o = run_funnel_with(p, &params[i], &q, seed);
                        (ndcg_with_ideal(&o.served, &q.relevance, serve, id), o.underflow)
                    })
                    .collect()
            })
            .collect();
        for (k, &i) in members.iter().enumerate() {
            let samples: Vec<(T, bool)> = rows.iter().map(|r| r[k]).collect();
            out[i] = Some(summarize(&samples));
        }
    }
    Ok(out.into_iter().map(|e| e.expect("every pipeline has a pool")).collect())
}

/// NDCG over a fixed set of queries (e.g. replayed from a file).
pub fn estimate_quality_on<T: Scalar>(
    p: &PipelineConfig,
    catalog: &Catalog,
    queries: &[QueryInstance<T>],
    seed: u64,
) -> Result<QualityEstimate<T>> {
    validate_pipeline(p, catalog)?;
    if queries.is_empty() {
        return Err(Error::Precondition("no queries".into()));
    }
    let params = FunnelParams::<T>::resolve(p, catalog)?;
    let serve = p.serve_count as usize;
    if let Some(q) = queries.iter().find(|q| q.len() < (p.items_in() as usize).max(serve)) {
        return Err(Error::Precondition(format!(
            "query {} has {} items, pipeline needs {}",
            q.query_id,
            q.len(),
            p.items_in()
        )));
    }
    let samples: Vec<(T, bool)> = queries
        .par_iter()
        .map(|q| {
            let out = run_funnel_with(p, &params, q, seed);
            let ideal = ideal_dcg(&q.relevance, serve);
            (ndcg_with_ideal(&out.served, &q.relevance, serve, ideal), out.underflow)
        })
        .collect();
    Ok(summarize(&samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::StageConfig;
    use crate::quality::query::gen_query;

    fn noiseless() -> Catalog {
        let mut c = Catalog::default_catalog();
        for m in &mut c.models {
            m.noise_sigma = Some(0.0);
        }
        c
    }

    #[test]
    fn noiseless_single_stage_serves_true_top() {
        let c = noiseless();
        let p = PipelineConfig::new(vec![StageConfig::new("RM_large", 4096, 64)]);
        let q = gen_query::<f64>(3, 0, 4096, 64, &RelevanceDist::default(), None).unwrap();
        let out = run_funnel(&p, &c, &q, 1).unwrap();
        let expect = crate::quality::exact_topk(&q.relevance, 64).unwrap();
        assert_eq!(out.served, expect);
        let est = estimate_quality::<f64>(&p, &c, &QualityConfig::default(), 50, 1).unwrap();
        assert_eq!(est.mean_ndcg, 100.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn missing_sigma_is_a_precondition_error() {
        let c = Catalog::default_catalog();
        let p = PipelineConfig::new(vec![StageConfig::new("RM_large", 4096, 64)]);
        assert!(matches!(
            estimate_quality::<f64>(&p, &c, &QualityConfig::default(), 10, 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn bucket_overshoot_is_forwarded_in_full() {
        let mut c = noiseless();
        c.model_mut("RM_small").unwrap().noise_sigma = Some(0.5);
        let p = PipelineConfig::new(vec![
            StageConfig::new("RM_small", 4096, 256).with_filter(crate::FilterMode::BucketFilter),
            StageConfig::new("RM_large", 256, 64),
        ]);
        let q = gen_query::<f64>(4, 0, 4096, 64, &RelevanceDist::default(), None).unwrap();
        let out = run_funnel(&p, &c, &q, 2).unwrap();
        assert!(out.forwarded[0] >= 256);
        assert_eq!(out.served.len(), 64);
    }

    #[test]
    fn deterministic_estimate() {
        let mut c = noiseless();
        c.model_mut("RM_large").unwrap().noise_sigma = Some(0.3);
        let p = PipelineConfig::new(vec![StageConfig::new("RM_large", 1024, 64)]);
        let cfg = QualityConfig::default();
        let a = estimate_quality::<f64>(&p, &c, &cfg, 200, 9).unwrap();
        let b = estimate_quality::<f64>(&p, &c, &cfg, 200, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.mean_ndcg < 100.0 && a.mean_ndcg > 0.0);
    }

    #[test]
    fn batch_matches_individual() {
        let mut c = noiseless();
        c.model_mut("RM_large").unwrap().noise_sigma = Some(0.3);
        c.model_mut("RM_small").unwrap().noise_sigma = Some(0.5);
        let ps = vec![
            PipelineConfig::new(vec![StageConfig::new("RM_large", 1024, 64)]),
            PipelineConfig::new(vec![
                StageConfig::new("RM_small", 4096, 256).with_sub_batches(4),
                StageConfig::new("RM_large", 256, 64),
            ]),
        ];
        let cfg = QualityConfig::default();
        let batch = estimate_quality_batch::<f64>(&ps, &c, &cfg, 100, 5).unwrap();
        for (p, b) in ps.iter().zip(&batch) {
            assert_eq!(*b, estimate_quality::<f64>(p, &c, &cfg, 100, 5).unwrap());
        }
    }
}
