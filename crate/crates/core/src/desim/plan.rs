//! Per-query service plans: which pool serves each step and for how long.

use serde::Serialize;

use crate::catalog::{Catalog, DeviceKind, PipelineConfig};
use crate::error::{Error, Result};
use crate::perf::{cpu_stage_latency, gpu_stage_latency, plan_accel, AccelDesign, AccelPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum PoolId {
    Cpu,
    Gpu,
    /// Sub-array group of the accelerator partition.
    Accel(usize),
    /// Stand-in pool for service-time overrides.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoolSpec {
    pub id: PoolId,
    pub servers: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Step {
    /// One stage on a CPU or GPU server.
    Host { pool: usize, stage: usize, service_s: f64 },
    /// Contiguous accelerator stages timed as one pipelined plan.
    /// `pools[g]` is the pool index of sub-array group `g`.
    Accel {
        first_stage: usize,
        plan: AccelPlan,
        pools: Vec<usize>,
    },
}

impl Step {
    /// Service slots one query occupies on this step.
    pub fn tasks(&self) -> usize {
        match self {
            Step::Host { .. } => 1,
            Step::Accel { plan, .. } => plan.tasks.len(),
        }
    }
}

/// The fixed route every query of a configuration takes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServicePlan {
    pub steps: Vec<Step>,
    pub pools: Vec<PoolSpec>,
}

fn pool_index(pools: &mut Vec<PoolSpec>, id: PoolId, servers: u32) -> usize {
    if let Some(i) = pools.iter().position(|p| p.id == id) {
        return i;
    }
    pools.push(PoolSpec { id, servers });
    pools.len() - 1
}

impl ServicePlan {
    /// Routes `p` by each stage's `device`. Accelerator stages must form one
    /// contiguous run, timed by `design`.
    pub fn build(p: &PipelineConfig, catalog: &Catalog, design: Option<&AccelDesign>) -> Result<Self> {
        crate::catalog::validate_pipeline(p, catalog)?;
        let hw = &catalog.hardware;
        let cpu_servers = (hw.cpu.cores / hw.cpu.threads_per_query.max(1)).max(1);
        let mut pools = Vec::new();
        let mut steps = Vec::new();
        let mut s = 0;
        let mut accel_runs = 0;
        while s < p.stages.len() {
            let stage = &p.stages[s];
            let m = catalog.model(&stage.model)?;
            match stage.device.kind() {
                DeviceKind::Cpu => {
                    let pool = pool_index(&mut pools, PoolId::Cpu, cpu_servers);
                    let service_s = cpu_stage_latency(stage, m, &hw.cpu).total_s;
                    steps.push(Step::Host { pool, stage: s, service_s });
                    s += 1;
                }
                DeviceKind::Gpu => {
                    let pool = pool_index(&mut pools, PoolId::Gpu, 1);
                    let service_s = gpu_stage_latency(stage, m, &hw.gpu, &hw.cpu).total_s;
                    steps.push(Step::Host { pool, stage: s, service_s });
                    s += 1;
                }
                DeviceKind::Accel => {
                    accel_runs += 1;
                    if accel_runs > 1 {
                        return Err(Error::Config(
                            "accelerator stages must be contiguous".into(),
                        ));
                    }
                    let d = design.ok_or_else(|| {
                        Error::Config(format!("stage {s} is mapped to the accelerator but no design was given"))
                    })?;
                    let end = (s..p.stages.len())
                        .find(|&i| p.stages[i].device.kind() != DeviceKind::Accel)
                        .unwrap_or(p.stages.len());
                    let mut sub = PipelineConfig::new(p.stages[s..end].to_vec());
                    sub.serve_count = if end == p.stages.len() {
                        p.serve_count
                    } else {
                        p.stages[end - 1].items_out
                    };
                    let plan = plan_accel(&sub, catalog, d)?;
                    let group_pools = plan
                        .servers
                        .iter()
                        .enumerate()
                        .map(|(g, &n)| pool_index(&mut pools, PoolId::Accel(g), n))
                        .collect();
                    steps.push(Step::Accel {
                        first_stage: s,
                        plan,
                        pools: group_pools,
                    });
                    s = end;
                }
            }
        }
        Ok(ServicePlan { steps, pools })
    }

    /// One step on a single pool with a placeholder service time.
    pub fn single_server(servers: u32, service_s: f64) -> Self {
        ServicePlan {
            steps: vec![Step::Host {
                pool: 0,
                stage: 0,
                service_s,
            }],
            pools: vec![PoolSpec {
                id: PoolId::Custom,
                servers,
            }],
        }
    }

    /// Latency of a query that never waits.
    pub fn unloaded_latency(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| match s {
                Step::Host { service_s, .. } => *service_s,
                Step::Accel { plan, .. } => plan.unloaded().total_s,
            })
            .sum()
    }

    /// Server-seconds each pool spends per query.
    pub fn busy_per_query(&self) -> Vec<f64> {
        let mut busy = vec![0.0; self.pools.len()];
        for s in &self.steps {
            match s {
                Step::Host { pool, service_s, .. } => busy[*pool] += service_s,
                Step::Accel { plan, pools, .. } => {
                    for t in &plan.tasks {
                        busy[pools[t.group]] += t.busy_s();
                    }
                }
            }
        }
        busy
    }

    /// Arrival rate at which the busiest pool saturates.
    pub fn capacity_qps(&self) -> f64 {
        self.busy_per_query()
            .iter()
            .zip(&self.pools)
            .filter(|(b, _)| **b > 0.0)
            .map(|(b, p)| p.servers as f64 / b)
            .fold(f64::INFINITY, f64::min)
    }

    /// Replaces every pool's server count.
    pub fn with_servers(mut self, servers: u32) -> Self {
        for p in &mut self.pools {
            p.servers = servers;
        }
        self
    }

    pub fn total_tasks(&self) -> usize {
        self.steps.iter().map(Step::tasks).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Device, StageConfig};
    use crate::perf::ArrayPartition;

    #[test]
    fn cpu_pool_has_task_parallel_servers() {
        let c = Catalog::default_catalog();
        let p = PipelineConfig::new(vec![StageConfig::new("RM_large", 4096, 64)]);
        let plan = ServicePlan::build(&p, &c, None).unwrap();
        assert_eq!(plan.pools, vec![PoolSpec { id: PoolId::Cpu, servers: 8 }]);
        assert!((plan.capacity_qps() - 8.0 / plan.unloaded_latency()).abs() < 1e-9);
    }

    #[test]
    fn accel_backend_after_gpu_frontend() {
        let c = Catalog::default_catalog();
        let p = PipelineConfig::new(vec![
            StageConfig::new("RM_small", 4096, 256).on(Device::Gpu),
            StageConfig::new("RM_large", 256, 64).on(Device::Accel(0)),
        ]);
        let d = AccelDesign::rpaccel(ArrayPartition::per_stage(&[4], &c.hardware.accel).unwrap());
        let plan = ServicePlan::build(&p, &c, Some(&d)).unwrap();
        assert_eq!(plan.steps.len(), 2);
        assert_eq!(plan.pools[1], PoolSpec { id: PoolId::Accel(0), servers: 4 });
        assert!(ServicePlan::build(&p, &c, None).is_err());
    }

    #[test]
    fn split_accel_runs_rejected() {
        let c = Catalog::default_catalog();
        let p = PipelineConfig::new(vec![
            StageConfig::new("RM_small", 4096, 1024).on(Device::Accel(0)),
            StageConfig::new("RM_med", 1024, 256),
            StageConfig::new("RM_large", 256, 64).on(Device::Accel(0)),
        ]);
        let d = AccelDesign::baseline(&c.hardware.accel);
        assert!(ServicePlan::build(&p, &c, Some(&d)).is_err());
    }
}
