//! Co-modeling of recommendation quality and serving performance for
//! multi-stage ranking funnels.
//!
//! * [`catalog`]: model/hardware descriptors, pipeline validation, footprints.
//! * [`quality`]: synthetic queries, noisy scoring, funnel filters, NDCG.
//! * [`perf`]: analytic CPU, GPU and accelerator latency models.
//! * [`desim`]: discrete-event serving simulation under Poisson load.
//! * [`explore`]: design-space enumeration, Pareto fronts and iso cuts.
//! * [`trace`]: Zipfian access traces and their binary format.
//!
//! Numeric kernels that benefit from reduced precision (ranking metrics,
//! filters, percentiles, dominance) are generic over [`Scalar`]; the
//! `*64`/`*32` aliases below fix the precision.

pub mod catalog;
pub mod desim;
pub mod error;
pub mod explore;
pub mod perf;
pub mod quality;
pub mod rng;
pub mod scalar;
pub mod trace;

pub use catalog::{
    load_catalog, resource_footprint, validate_pipeline, Catalog, Device, FilterMode,
    Footprint, HardwareSpec, ModelSpec, PipelineConfig, StageConfig, Violation,
};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type QualityEstimate64 = quality::QualityEstimate<f64>;
pub type QualityEstimate32 = quality::QualityEstimate<f32>;
pub type QueryInstance64 = quality::QueryInstance<f64>;
pub type QueryInstance32 = quality::QueryInstance<f32>;
pub type FunnelParams64 = quality::FunnelParams<f64>;
pub type FunnelParams32 = quality::FunnelParams<f32>;
pub type Scored64 = quality::Scored<f64>;
pub type Scored32 = quality::Scored<f32>;
