//! Exhaustive design-space exploration: enumeration, evaluation, Pareto
//! fronts and iso cuts.

pub mod evaluate;
pub mod pareto;
pub mod space;

pub use evaluate::{
    algorithmic_key, calibrated, evaluate, iso_cut, max_qps_under_sla, pareto_front, read_points_csv,
    write_points_csv, Budgets, CutAxis, EvalPoint, Evaluation, POINT_COLUMNS,
};
pub use pareto::{dominates, pareto_indices};
pub use space::{enumerate, enumerate_pipelines, map_pipeline, Config, DesignSpace, MappingKind, PartitionSpec};
