//! Single-threaded event loop over FIFO server pools.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

use super::arrivals::poisson_arrivals;
use super::plan::{ServicePlan, Step};
use super::stats::percentile_in_place;

fn default_warmup_fraction() -> f64 {
    0.1
}

/// Offered load and horizon of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub qps: f64,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub seed: u64,
}

impl Workload {
    /// Warmup defaults to a tenth of the horizon.
    pub fn new(qps: f64, duration_s: f64, seed: u64) -> Self {
        Workload {
            qps,
            duration_s,
            warmup_s: duration_s * default_warmup_fraction(),
            seed,
        }
    }

    /// Horizon long enough for about `n` measured queries.
    pub fn for_queries(qps: f64, n: u64, seed: u64) -> Self {
        Self::new(qps, n as f64 / qps / (1.0 - default_warmup_fraction()), seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.qps > 0.0 && self.qps.is_finite()) {
            return Err(Error::validation("workload", format!("qps {} must be > 0", self.qps)));
        }
        if !(self.warmup_s >= 0.0 && self.warmup_s < self.duration_s) {
            return Err(Error::validation(
                "workload",
                format!("warmup {} must lie in [0, duration {})", self.warmup_s, self.duration_s),
            ));
        }
        Ok(())
    }
}

/// Replaces modeled host-step service times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServiceOverride {
    Deterministic { service_s: f64 },
    Exponential { rate: f64 },
}

impl ServiceOverride {
    pub fn mean_s(&self) -> f64 {
        match *self {
            ServiceOverride::Deterministic { service_s } => service_s,
            ServiceOverride::Exponential { rate } => 1.0 / rate,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub service: Option<ServiceOverride>,
    /// Server count for every pool.
    pub servers: Option<u32>,
    /// Waiting tasks per pool beyond which queries are dropped.
    pub queue_cap: Option<usize>,
    /// Keep `(arrival, sojourn)` of every measured query.
    pub record_sojourns: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub offered_qps: f64,
    pub arrivals: u64,
    pub completed: u64,
    pub in_flight: u64,
    pub dropped: u64,
    /// Completions that arrived after warmup; the statistics below use these.
    pub measured: u64,
    pub p50_s: f64,
    pub p99_s: f64,
    pub mean_s: f64,
    pub achieved_qps: f64,
    /// Time-averaged queries in the system after warmup.
    pub mean_in_system: f64,
    /// Mean queueing delay per service slot, in route order.
    pub per_stage_waits: Vec<f64>,
    /// Offered load over capacity of the busiest pool.
    pub peak_utilization: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub stats: SimStats,
    pub sojourns: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Arrive(usize),
    Ready { q: usize, step: usize, task: usize },
    Done { q: usize, step: usize, task: usize, pool: usize },
    Complete(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    t: f64,
    seq: u64,
    kind: Kind,
}

impl Eq for Event {}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy)]
struct Waiting {
    q: usize,
    step: usize,
    task: usize,
    since: f64,
}

#[derive(Debug)]
struct Pool {
    servers: u32,
    busy: u32,
    queue: VecDeque<Waiting>,
}

#[derive(Debug, Clone)]
struct Query {
    arrival: f64,
    ends: Vec<f64>,
    dropped: bool,
}

struct Engine<'a> {
    plan: &'a ServicePlan,
    opts: &'a SimOptions,
    w: &'a Workload,
    heap: BinaryHeap<Event>,
    seq: u64,
    pools: Vec<Pool>,
    queries: Vec<Query>,
    service_rng: Rng,
    exp: Option<Exp<f64>>,
    slot_base: Vec<usize>,
    wait_sum: Vec<f64>,
    wait_n: Vec<u64>,
    // in-system accounting
    in_system: u64,
    last_t: f64,
    area: f64,
    quarter_area: [f64; 4],
    completed: u64,
    dropped: u64,
    sojourns: Vec<(f64, f64)>,
}

impl<'a> Engine<'a> {
    fn push(&mut self, t: f64, kind: Kind) {
        self.seq += 1;
        self.heap.push(Event { t, seq: self.seq, kind });
    }

    /// Integrates the in-system count up to `t` over the measured window.
    fn advance(&mut self, t: f64) {
        let (w0, w1) = (self.w.warmup_s, self.w.duration_s);
        let a = self.last_t.max(w0);
        let b = t.min(w1);
        if b > a {
            let n = self.in_system as f64;
            self.area += n * (b - a);
            let q = (w1 - w0) / 4.0;
            for (i, slot) in self.quarter_area.iter_mut().enumerate() {
                let lo = w0 + q * i as f64;
                let hi = lo + q;
                let len = b.min(hi) - a.max(lo);
                if len > 0.0 {
                    *slot += n * len;
                }
            }
        }
        self.last_t = self.last_t.max(t);
    }

    fn host_service(&mut self, modeled: f64) -> f64 {
        match self.opts.service {
            None => modeled,
            Some(ServiceOverride::Deterministic { service_s }) => service_s,
            Some(ServiceOverride::Exponential { .. }) => {
                self.exp.expect("built with the override").sample(&mut self.service_rng)
            }
        }
    }

    fn pool_of(&self, step: usize, task: usize) -> usize {
        match &self.plan.steps[step] {
            Step::Host { pool, .. } => *pool,
            Step::Accel { plan, pools, .. } => pools[plan.tasks[task].group],
        }
    }

    /// Queues the first task of `step`; accelerator plans open with the
    /// host-to-device transfer.
    fn begin_step(&mut self, q: usize, step: usize, t: f64) {
        let delay = match &self.plan.steps[step] {
            Step::Host { .. } => 0.0,
            Step::Accel { plan, .. } => plan.input_s,
        };
        self.push(t + delay, Kind::Ready { q, step, task: 0 });
    }

    /// Route continues after step `step` finished at `t`.
    fn next_step(&mut self, q: usize, step: usize, t: f64) {
        if step + 1 < self.plan.steps.len() {
            self.begin_step(q, step + 1, t);
        } else {
            self.push(t, Kind::Complete(q));
        }
    }

    fn enqueue(&mut self, t: f64, q: usize, step: usize, task: usize) {
        if self.queries[q].dropped {
            return;
        }
        let pi = self.pool_of(step, task);
        let pool = &mut self.pools[pi];
        if pool.busy < pool.servers {
            pool.busy += 1;
            self.start(t, t, q, step, task, pi);
        } else if self.opts.queue_cap.is_some_and(|cap| pool.queue.len() >= cap) {
            self.queries[q].dropped = true;
            self.advance(t);
            self.in_system -= 1;
            self.dropped += 1;
        } else {
            pool.queue.push_back(Waiting { q, step, task, since: t });
        }
    }

    fn start(&mut self, t: f64, since: f64, q: usize, step: usize, task: usize, pool: usize) {
        if self.queries[q].arrival >= self.w.warmup_s {
            let slot = self.slot_base[step] + task;
            self.wait_sum[slot] += t - since;
            self.wait_n[slot] += 1;
        }
        let end = match &self.plan.steps[step] {
            Step::Host { service_s, .. } => {
                let d = *service_s;
                t + self.host_service(d)
            }
            Step::Accel { plan, .. } => {
                let tk = &plan.tasks[task];
                let prev = if task == 0 {
                    None
                } else {
                    Some(self.queries[q].ends.as_slice())
                };
                let ends = tk.run(t, prev);
                let end = *ends.last().unwrap_or(&t);
                if let Some(next) = plan.tasks.get(task + 1) {
                    let at = next.ready_at(&ends).max(t);
                    self.push(at, Kind::Ready { q, step, task: task + 1 });
                }
                self.queries[q].ends = ends;
                end
            }
        };
        self.push(end, Kind::Done { q, step, task, pool });
    }

    fn release(&mut self, t: f64, pool: usize) {
        // dropped queries leave their slots to the next live waiter
        while let Some(w) = self.pools[pool].queue.pop_front() {
            if self.queries[w.q].dropped {
                continue;
            }
            self.start(t, w.since, w.q, w.step, w.task, pool);
            return;
        }
        self.pools[pool].busy -= 1;
    }

    fn done(&mut self, t: f64, q: usize, step: usize, task: usize, pool: usize) {
        self.release(t, pool);
        if self.queries[q].dropped {
            return;
        }
        match &self.plan.steps[step] {
            Step::Host { .. } => self.next_step(q, step, t),
            Step::Accel { plan, .. } => {
                if task + 1 == plan.tasks.len() {
                    let tail = plan.tail_s;
                    self.queries[q].ends.clear();
                    self.next_step(q, step, t + tail);
                }
            }
        }
    }
}

/// Runs the plan under Poisson arrivals.
pub fn simulate_plan(plan: &ServicePlan, w: &Workload, opts: &SimOptions) -> Result<SimResult> {
    w.validate()?;
    if plan.steps.is_empty() {
        return Err(Error::Simulation("empty service plan".into()));
    }
    let servers_override = opts.servers;
    if servers_override == Some(0) || plan.pools.iter().any(|p| p.servers == 0) && servers_override.is_none() {
        return Err(Error::Simulation("a pool has zero servers".into()));
    }
    let exp = match opts.service {
        Some(ServiceOverride::Exponential { rate }) => Some(
            Exp::new(rate).map_err(|e| Error::Simulation(format!("service rate {rate}: {e}")))?,
        ),
        Some(ServiceOverride::Deterministic { service_s }) if !(service_s >= 0.0) => {
            return Err(Error::Simulation(format!("service time {service_s} < 0")));
        }
        _ => None,
    };

    let arrivals = poisson_arrivals(w.qps, w.duration_s, w.seed)?;
    let mut slot_base = Vec::with_capacity(plan.steps.len());
    let mut slots = 0;
    for s in &plan.steps {
        slot_base.push(slots);
        slots += s.tasks();
    }

    let mut e = Engine {
        plan,
        opts,
        w,
        heap: BinaryHeap::new(),
        seq: 0,
        pools: plan
            .pools
            .iter()
            .map(|p| Pool {
                servers: servers_override.unwrap_or(p.servers),
                busy: 0,
                queue: VecDeque::new(),
            })
            .collect(),
        queries: Vec::with_capacity(arrivals.len()),
        service_rng: rng::stream(w.seed, &[rng::TAG_SERVICE]),
        exp,
        slot_base,
        wait_sum: vec![0.0; slots],
        wait_n: vec![0; slots],
        in_system: 0,
        last_t: 0.0,
        area: 0.0,
        quarter_area: [0.0; 4],
        completed: 0,
        dropped: 0,
        sojourns: Vec::new(),
    };

    let mut measured: Vec<f64> = Vec::new();
    if let Some(&t0) = arrivals.first() {
        e.push(t0, Kind::Arrive(0));
    }
    while let Some(ev) = e.heap.pop() {
        if ev.t > w.duration_s {
            break;
        }
        match ev.kind {
            Kind::Arrive(i) => {
                e.advance(ev.t);
                e.in_system += 1;
                e.queries.push(Query {
                    arrival: ev.t,
                    ends: Vec::new(),
                    dropped: false,
                });
                if let Some(&next) = arrivals.get(i + 1) {
                    e.push(next, Kind::Arrive(i + 1));
                }
                e.begin_step(i, 0, ev.t);
            }
            Kind::Ready { q, step, task } => e.enqueue(ev.t, q, step, task),
            Kind::Done { q, step, task, pool } => e.done(ev.t, q, step, task, pool),
            Kind::Complete(q) => {
                e.advance(ev.t);
                e.in_system -= 1;
                e.completed += 1;
                let a = e.queries[q].arrival;
                if a >= w.warmup_s {
                    measured.push(ev.t - a);
                    if opts.record_sojourns {
                        e.sojourns.push((a, ev.t - a));
                    }
                }
            }
        }
    }
    e.advance(w.duration_s);

    let window = w.duration_s - w.warmup_s;
    let n = measured.len();
    let mean_s = if n > 0 {
        measured.iter().sum::<f64>() / n as f64
    } else {
        f64::INFINITY
    };
    let (p50_s, p99_s) = if n > 0 {
        (
            percentile_in_place(&mut measured, 50.0)?,
            percentile_in_place(&mut measured, 99.0)?,
        )
    } else {
        (f64::INFINITY, f64::INFINITY)
    };

    let busy = plan.busy_per_query();
    let peak_utilization = busy
        .iter()
        .zip(&e.pools)
        .map(|(b, p)| w.qps * opts.service.map_or(*b, |s| s.mean_s()) / p.servers as f64)
        .fold(0.0, f64::max);
    let q = e.quarter_area;
    let saturated = peak_utilization >= 1.0 || q[3] > 2.0 * q[1] + 5.0 * window / 4.0;

    let arrived = e.queries.len() as u64;
    Ok(SimResult {
        stats: SimStats {
            offered_qps: w.qps,
            arrivals: arrived,
            completed: e.completed,
            in_flight: arrived - e.completed - e.dropped,
            dropped: e.dropped,
            measured: n as u64,
            p50_s,
            p99_s,
            mean_s,
            achieved_qps: n as f64 / window,
            mean_in_system: e.area / window,
            per_stage_waits: e
                .wait_sum
                .iter()
                .zip(&e.wait_n)
                .map(|(s, &k)| if k > 0 { s / k as f64 } else { 0.0 })
                .collect(),
            peak_utilization,
            saturated,
        },
        sojourns: e.sojourns,
    })
}

/// Builds the route of `p` and simulates it. A service override collapses
/// the route to a single pool.
pub fn simulate(
    p: &crate::catalog::PipelineConfig,
    catalog: &crate::catalog::Catalog,
    design: Option<&crate::perf::AccelDesign>,
    w: &Workload,
    opts: &SimOptions,
) -> Result<SimResult> {
    let plan = match opts.service {
        Some(s) => ServicePlan::single_server(opts.servers.unwrap_or(1), s.mean_s()),
        None => ServicePlan::build(p, catalog, design)?,
    };
    simulate_plan(&plan, w, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(servers: u32, service: ServiceOverride) -> (ServicePlan, SimOptions) {
        (
            ServicePlan::single_server(servers, service.mean_s()),
            SimOptions {
                service: Some(service),
                ..Default::default()
            },
        )
    }

    #[test]
    fn no_queueing_at_low_load() {
        let (plan, opts) = single(1, ServiceOverride::Deterministic { service_s: 1e-3 });
        let r = simulate_plan(&plan, &Workload::new(0.5, 4000.0, 1), &opts).unwrap();
        assert!((r.stats.p99_s - 1e-3).abs() < 1e-12, "{}", r.stats.p99_s);
        assert!(!r.stats.saturated);
    }

    #[test]
    fn mm1_tail() {
        let (plan, opts) = single(1, ServiceOverride::Exponential { rate: 100.0 });
        let r = simulate_plan(&plan, &Workload::for_queries(50.0, 200_000, 11), &opts).unwrap();
        let expect = -(0.01f64).ln() / 50.0;
        assert!((r.stats.p99_s / expect - 1.0).abs() < 0.05, "{}", r.stats.p99_s);
        let little = r.stats.achieved_qps * r.stats.mean_s;
        assert!((r.stats.mean_in_system / little - 1.0).abs() < 0.1);
    }

    #[test]
    fn conservation_and_saturation() {
        let (plan, opts) = single(1, ServiceOverride::Exponential { rate: 100.0 });
        let r = simulate_plan(&plan, &Workload::new(150.0, 200.0, 2), &opts).unwrap();
        let s = &r.stats;
        assert_eq!(s.completed + s.in_flight + s.dropped, s.arrivals);
        assert!(s.saturated);
        assert!(s.in_flight > 1000);
    }

    #[test]
    fn queue_cap_drops() {
        let (plan, mut opts) = single(1, ServiceOverride::Exponential { rate: 100.0 });
        opts.queue_cap = Some(2);
        let r = simulate_plan(&plan, &Workload::new(150.0, 100.0, 3), &opts).unwrap();
        let s = &r.stats;
        assert!(s.dropped > 0);
        assert_eq!(s.completed + s.in_flight + s.dropped, s.arrivals);
        assert!(s.in_flight <= 3);
    }

    #[test]
    fn zero_servers_rejected() {
        let (plan, mut opts) = single(1, ServiceOverride::Deterministic { service_s: 1e-3 });
        opts.servers = Some(0);
        assert!(simulate_plan(&plan, &Workload::new(1.0, 10.0, 1), &opts).is_err());
    }

    #[test]
    fn bit_identical_reruns() {
        let (plan, opts) = single(2, ServiceOverride::Exponential { rate: 100.0 });
        let w = Workload::new(150.0, 50.0, 9);
        let a = simulate_plan(&plan, &w, &opts).unwrap();
        let b = simulate_plan(&plan, &w, &opts).unwrap();
        assert_eq!(a, b);
    }
}
