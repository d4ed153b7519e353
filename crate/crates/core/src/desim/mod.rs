//! Discrete-event simulation of query serving under Poisson load.
//!
//! Each query follows a fixed route of steps. CPU and GPU stages occupy one
//! server of their pool; contiguous accelerator stages run as an
//! [`AccelPlan`](crate::perf::AccelPlan) whose tasks each hold one sub-array
//! of their group. Pools serve in FIFO order.

pub mod arrivals;
pub mod engine;
pub mod plan;
pub mod stats;

pub use arrivals::poisson_arrivals;
pub use engine::{simulate, simulate_plan, ServiceOverride, SimOptions, SimResult, SimStats, Workload};
pub use plan::{PoolId, PoolSpec, ServicePlan, Step};
pub use stats::{percentile, percentile_in_place};
