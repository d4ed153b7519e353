//! Ranking quality of a multi-stage funnel under noisy per-stage scoring.

mod filter;
mod funnel;
mod metric;
mod noise;
mod query;
mod replay;

pub use filter::{
    apply_filter, bucket_filter, bucket_filter_items, exact_topk, indexed, rank_order,
    select_topk, stitch, subbatch_topk, BucketParams, Filtered, Scored,
};
pub use funnel::{
    calibrate_catalog, estimate_quality, estimate_quality_batch, estimate_quality_on, run_funnel, run_funnel_with,
    FunnelOutcome, FunnelParams, QualityConfig, QualityEstimate,
};
pub use metric::{dcg, ideal_dcg, ndcg};
pub use noise::{calibrate_noise, measure_error, model_score, noisy_score, ErrorSample};
pub use query::{gen_query, GammaSource, QueryInstance, RelevanceDist, RelevanceSampler, RowSpec};
pub use replay::{read_queries, write_queries};
