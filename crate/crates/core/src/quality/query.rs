//! Synthetic queries: a candidate pool with latent relevances and optional
//! embedding row ids.

use rand_distr::{Distribution, Gamma, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::trace::ZipfRows;

/// Distribution of latent item relevance on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RelevanceDist {
    Beta { alpha: f64, beta: f64 },
    Uniform,
}

impl Default for RelevanceDist {
    fn default() -> Self {
        RelevanceDist::Beta {
            alpha: 0.5,
            beta: 8.0,
        }
    }
}

impl RelevanceDist {
    pub fn mean(&self) -> f64 {
        match *self {
            RelevanceDist::Beta { alpha, beta } => alpha / (alpha + beta),
            RelevanceDist::Uniform => 0.5,
        }
    }

    /// A reusable sampler. Fails on non-positive Beta parameters.
    pub fn sampler(&self) -> Result<RelevanceSampler> {
        Ok(match *self {
            RelevanceDist::Beta { alpha, beta } => RelevanceSampler::Beta {
                a: GammaSource::new(alpha)?,
                b: GammaSource::new(beta)?,
            },
            RelevanceDist::Uniform => {
                RelevanceSampler::Uniform(Uniform::new_inclusive(0.0, 1.0).expect("valid range"))
            }
        })
    }
}

/// Unit-scale Gamma variate source. Shape 1/2 is drawn as `Z^2 / 2`, which
/// is several times cheaper than the general sampler.
#[derive(Debug, Clone, Copy)]
pub enum GammaSource {
    Half,
    General(Gamma<f64>),
}

impl GammaSource {
    fn new(shape: f64) -> Result<Self> {
        if shape == 0.5 {
            return Ok(GammaSource::Half);
        }
        Gamma::new(shape, 1.0)
            .map(GammaSource::General)
            .map_err(|e| Error::validation("relevance", format!("shape {shape}: {e}")))
    }

    #[inline]
    fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            GammaSource::Half => {
                let z: f64 = StandardNormal.sample(rng);
                0.5 * z * z
            }
            GammaSource::General(g) => g.sample(rng),
        }
    }
}

/// Beta is drawn as `Ga / (Ga + Gb)`.
#[derive(Debug, Clone, Copy)]
pub enum RelevanceSampler {
    Beta { a: GammaSource, b: GammaSource },
    Uniform(Uniform<f64>),
}

impl RelevanceSampler {
    #[inline]
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = match self {
            RelevanceSampler::Beta { a, b } => {
                let x = a.sample(rng);
                let y = b.sample(rng);
                if x + y > 0.0 {
                    x / (x + y)
                } else {
                    0.0
                }
            }
            RelevanceSampler::Uniform(u) => u.sample(rng),
        };
        x.clamp(0.0, 1.0)
    }
}

/// Embedding row geometry for queries that carry row ids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowSpec {
    pub n_tables: u32,
    pub rows_per_table: u64,
    pub zipf_exponent: f64,
}

/// One query's candidate pool. Item ids are positions in `relevance`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryInstance<T> {
    pub query_id: u64,
    pub relevance: Vec<T>,
    /// `rows[item][table]`, present only when row ids were requested.
    pub rows: Option<Vec<Vec<u64>>>,
}

impl<T: Scalar> QueryInstance<T> {
    pub fn len(&self) -> usize {
        self.relevance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevance.is_empty()
    }

    pub fn validate(&self, rows_per_table: Option<u64>) -> Result<()> {
        for (i, r) in self.relevance.iter().enumerate() {
            if !(*r >= T::zero() && *r <= T::one()) {
                return Err(Error::validation(
                    "true_relevance",
                    format!("query {} item {i}: {r} outside [0, 1]", self.query_id),
                ));
            }
        }
        if let (Some(rows), Some(limit)) = (&self.rows, rows_per_table) {
            if rows.len() != self.relevance.len() {
                return Err(Error::validation("table_row_ids", "one row list per item required"));
            }
            if rows.iter().flatten().any(|&r| r >= limit) {
                return Err(Error::validation(
                    "table_row_ids",
                    format!("query {}: row id >= rows_per_table", self.query_id),
                ));
            }
        }
        Ok(())
    }
}

/// Generates query `query_id` of the stream rooted at `seed`.
pub fn gen_query<T: Scalar>(
    seed: u64,
    query_id: u64,
    n_items: usize,
    serve_count: usize,
    dist: &RelevanceDist,
    rows: Option<&RowSpec>,
) -> Result<QueryInstance<T>> {
    if n_items < serve_count {
        return Err(Error::Precondition(format!(
            "n_items {n_items} < serve_count {serve_count}"
        )));
    }
    let sampler = dist.sampler()?;
    Ok(gen_query_with(seed, query_id, n_items, &sampler, rows))
}

pub(crate) fn gen_query_with<T: Scalar>(
    seed: u64,
    query_id: u64,
    n_items: usize,
    sampler: &RelevanceSampler,
    rows: Option<&RowSpec>,
) -> QueryInstance<T> {
    let mut rng = rng::stream(seed, &[rng::TAG_RELEVANCE, query_id]);
    let relevance = (0..n_items).map(|_| T::lit(sampler.sample(&mut rng))).collect();
    let rows = rows.map(|spec| {
        let zipf = ZipfRows::new(spec.rows_per_table, spec.zipf_exponent)
            .expect("row spec validated by caller");
        let mut rng = rng::stream(seed, &[rng::TAG_ROWS, query_id]);
        (0..n_items)
            .map(|_| (0..spec.n_tables).map(|_| zipf.sample(&mut rng)).collect())
            .collect()
    });
    QueryInstance {
        query_id,
        relevance,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_shape_and_range() {
        let q = gen_query::<f64>(1, 0, 4096, 64, &RelevanceDist::default(), None).unwrap();
        assert_eq!(q.len(), 4096);
        q.validate(None).unwrap();
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = RowSpec {
            n_tables: 4,
            rows_per_table: 1000,
            zipf_exponent: 1.0,
        };
        let a = gen_query::<f32>(9, 3, 100, 64, &RelevanceDist::Uniform, Some(&spec)).unwrap();
        let b = gen_query::<f32>(9, 3, 100, 64, &RelevanceDist::Uniform, Some(&spec)).unwrap();
        assert_eq!(a, b);
        a.validate(Some(1000)).unwrap();
        assert_eq!(a.rows.as_ref().unwrap()[0].len(), 4);
    }

    #[test]
    fn too_few_items() {
        assert!(matches!(
            gen_query::<f64>(1, 0, 10, 64, &RelevanceDist::default(), None),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn beta_mean_matches_analytic() {
        let d = RelevanceDist::default();
        let q = gen_query::<f64>(5, 0, 100_000, 64, &d, None).unwrap();
        let mean = q.relevance.iter().sum::<f64>() / q.len() as f64;
        assert!((d.mean() - 1.0 / 17.0).abs() < 1e-15);
        assert!((mean - 0.0588).abs() < 0.002, "{mean}");
    }

    #[test]
    fn general_beta_moments() {
        // Beta(2, 3): mean 0.4, variance 0.04
        let d = RelevanceDist::Beta { alpha: 2.0, beta: 3.0 };
        let q = gen_query::<f64>(6, 0, 200_000, 64, &d, None).unwrap();
        let n = q.len() as f64;
        let mean = q.relevance.iter().sum::<f64>() / n;
        let var = q.relevance.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        assert!((mean - 0.4).abs() < 0.003, "{mean}");
        assert!((var - 0.04).abs() < 0.001, "{var}");
        assert!(RelevanceDist::Beta { alpha: 0.0, beta: 1.0 }.sampler().is_err());
    }
}
