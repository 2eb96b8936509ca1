//! Time-slotted simulation loop.
//!
//! Each slot runs, in order: arrivals into source queues, compute event
//! loops over `[t, t+1)`, a queue snapshot, the scheme's routing decision
//! and transfers. Jobs moved in slot `t` land in receiver queues at the end
//! of the slot and are first seen by compute and routing at `t + 1`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baselines::{
    bp_offload_destination, lp_policy_step, next_hop_selection, offload_candidates, spbp_offload_destination,
    PolicyAction, Scheme, StaticPolicy,
};
use crate::compute::{Completion, ComputeNodeState, DEFAULT_PROCESSORS};
use crate::error::{Error, Result};
use crate::extended::{build_extended_graph, derive_typed_service_rates, RateScheme, ServiceRates, TaskType};
use crate::lp::{build_lp, solve_lp, FlowProblem, FlowSolution};
use crate::metrics::MetricsRecord;
use crate::netgraph::{build_conflict_graph, generate_topology, ConflictGraph, GenParams, NodeId, Topology};
use crate::queueing::{JobId, QueueBank};
use crate::rng::{self, tag, SimRng};
use crate::spbp::{compute_bias_table, schedule_slot, select_commodities, BiasTable, CommodityBias};
use crate::traffic::{generate_tasks, validate_tasks, ArrivalStreams, Job, TaskGenParams, TaskSpec};

/// Multiplicative per-slot fading on the long-term rate, drawn from a
/// normal truncated to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FadingParams {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for FadingParams {
    fn default() -> Self {
        FadingParams {
            mean: 1.0,
            sd: 0.2,
            lo: 0.5,
            hi: 1.5,
        }
    }
}

impl FadingParams {
    fn draw(&self, rng: &mut impl Rng) -> f64 {
        if self.sd <= 0.0 {
            return self.mean.clamp(self.lo, self.hi);
        }
        let normal = Normal::new(self.mean, self.sd).expect("finite sd");
        loop {
            let x = normal.sample(rng);
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
    }
}

/// Real-time rates for one slot: `max(1, round(r_e * F))` per undirected link.
pub fn realize_link_rates(topo: &Topology, fading: &FadingParams, rng: &mut impl Rng) -> Vec<u32> {
    topo.links
        .iter()
        .map(|l| (l.rate * fading.draw(rng)).round().max(1.0) as u32)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Types 0 and 1 (type 1 on servers only), bursty tasks allowed.
    TwoType,
    /// One type at 0.125 of base rate, streaming tasks only.
    SingleType,
}

impl Scenario {
    pub fn rate_scheme(self) -> RateScheme {
        match self {
            Scenario::TwoType => RateScheme::two_type(),
            Scenario::SingleType => RateScheme::single_type(),
        }
    }

    pub fn n_types(self) -> usize {
        self.rate_scheme().n_types()
    }

    pub fn allows_bursty(self) -> bool {
        matches!(self, Scenario::TwoType)
    }
}

/// A network plus a unit-load task list; the run's load scales the rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub topology: Topology,
    pub service_rates: ServiceRates,
    pub tasks: Vec<TaskSpec>,
}

impl Instance {
    pub fn n_types(&self) -> usize {
        self.service_rates.n_types()
    }

    pub fn generate(
        network_seed: u64,
        traffic_seed: u64,
        scenario: Scenario,
        gen: &GenParams,
        traffic: &TaskGenParams,
    ) -> Result<Instance> {
        let topology = generate_topology(network_seed, gen)?;
        let service_rates = derive_typed_service_rates(&topology, &scenario.rate_scheme())?;
        let traffic = TaskGenParams {
            allow_bursty: traffic.allow_bursty && scenario.allows_bursty(),
            ..traffic.clone()
        };
        let tasks = generate_tasks(traffic_seed, &topology, scenario.n_types(), 1.0, &traffic)?;
        Ok(Instance {
            topology,
            service_rates,
            tasks,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub horizon: u32,
    pub scheme: Scheme,
    pub load: f64,
    /// Drives arrivals, fading and policy sampling.
    pub seed: u64,
    pub processors: usize,
    pub fading: FadingParams,
    /// Keep per-slot queue and schedule traces.
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 1000,
            scheme: Scheme::JointSpbp,
            load: 1.0,
            seed: 0,
            processors: DEFAULT_PROCESSORS,
            fading: FadingParams::default(),
            trace: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParams("horizon must be positive".into()));
        }
        if !(self.load > 0.0 && self.load.is_finite()) {
            return Err(Error::InvalidParams("load must be positive".into()));
        }
        if self.processors == 0 {
            return Err(Error::InvalidParams("processor count must be at least 1".into()));
        }
        let f = &self.fading;
        if !(f.sd >= 0.0 && f.lo <= f.mean && f.mean <= f.hi && f.lo >= 0.0) {
            return Err(Error::InvalidParams("bad fading parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueueTraceRow {
    pub slot: u32,
    pub node: NodeId,
    pub commodity: usize,
    pub backlog: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleTraceRow {
    pub slot: u32,
    pub link: usize,
    pub from: NodeId,
    pub to: NodeId,
    pub commodity: usize,
    pub quota: u32,
    pub moved: u32,
}

/// Job counts after a slot; `created == completed + queued + processing`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Accounting {
    pub created: usize,
    pub completed: usize,
    pub queued: usize,
    pub processing: usize,
}

impl Accounting {
    pub fn balanced(&self) -> bool {
        self.created == self.completed + self.queued + self.processing
    }
}

enum Routing {
    /// Commodity = task type; routing queues double as compute queues.
    Joint { bias: CommodityBias },
    /// Commodity = destination node; separate compute queues.
    Separated { bias: CommodityBias, biased_offload: bool },
    /// Commodity = next hop; separate compute queues.
    Static { policy: StaticPolicy },
}

pub struct Simulation {
    cfg: SimConfig,
    topo: Topology,
    cg: ConflictGraph,
    mu: ServiceRates,
    bias: BiasTable,
    servers: Vec<NodeId>,
    routing: Routing,
    tasks: Vec<TaskSpec>,
    arrivals: ArrivalStreams,
    fading_rng: SimRng,
    policy_rng: SimRng,
    jobs: Vec<Job>,
    queues: QueueBank,
    compute_queues: Option<QueueBank>,
    compute: Vec<Option<ComputeNodeState>>,
    slot: u32,
    completed: usize,
    backlog: Vec<u64>,
    completions: Vec<Completion>,
    queue_trace: Vec<QueueTraceRow>,
    schedule_trace: Vec<ScheduleTraceRow>,
    lp: Option<(FlowProblem, FlowSolution)>,
}

impl Simulation {
    pub fn new(instance: &Instance, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let topo = instance.topology.clone();
        let mu = instance.service_rates.clone();
        let n_types = mu.n_types();
        validate_tasks(&topo, n_types, &instance.tasks)?;
        let eg = build_extended_graph(&topo, &mu, n_types)?;
        let bias = compute_bias_table(&eg)?;
        let cg = build_conflict_graph(&topo);
        let tasks: Vec<TaskSpec> = instance.tasks.iter().map(|t| t.scaled(cfg.load)).collect();
        let n = topo.n_nodes();

        let mut lp = None;
        let (routing, n_commodities, separate_compute) = match cfg.scheme {
            Scheme::JointSpbp => (Routing::Joint { bias: bias.type_bias() }, n_types, false),
            Scheme::SpbpSpbp | Scheme::BpSpbp => (
                Routing::Separated {
                    bias: bias.destination_bias(),
                    biased_offload: cfg.scheme == Scheme::SpbpSpbp,
                },
                n,
                true,
            ),
            Scheme::JointLp => {
                let problem = build_lp(&topo, &tasks, &mu, &cg)?;
                let solution = solve_lp(&problem)?;
                if !solution.is_optimal() {
                    return Err(Error::LpInfeasible { load: cfg.load });
                }
                let policy = StaticPolicy::from_solution(&problem, &solution);
                lp = Some((problem, solution));
                (Routing::Static { policy }, n, true)
            }
        };

        let compute = (0..n)
            .map(|v| {
                let row = mu.row(v);
                row.iter()
                    .any(|&m| m > 0.0)
                    .then(|| ComputeNodeState::new(v, cfg.processors, row))
            })
            .collect();

        Ok(Simulation {
            arrivals: ArrivalStreams::new(cfg.seed, &tasks),
            fading_rng: rng::substream(cfg.seed, &[tag::FADING]),
            policy_rng: rng::substream(cfg.seed, &[tag::POLICY]),
            servers: topo.servers(),
            queues: QueueBank::new(n, n_commodities),
            compute_queues: separate_compute.then(|| QueueBank::new(n, n_types)),
            compute,
            cfg: cfg.clone(),
            topo,
            cg,
            mu,
            bias,
            routing,
            tasks,
            jobs: Vec::new(),
            slot: 0,
            completed: 0,
            backlog: Vec::new(),
            completions: Vec::new(),
            queue_trace: Vec::new(),
            schedule_trace: Vec::new(),
            lp,
        })
    }

    pub fn slot(&self) -> u32 {
        self.slot
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    pub fn bias(&self) -> &BiasTable {
        &self.bias
    }

    pub fn backlog_series(&self) -> &[u64] {
        &self.backlog
    }

    pub fn completions(&self) -> &[Completion] {
        &self.completions
    }

    pub fn accounting(&self) -> Accounting {
        Accounting {
            created: self.jobs.len(),
            completed: self.completed,
            queued: self.queues.total() + self.compute_queues.as_ref().map_or(0, QueueBank::total),
            processing: self.compute.iter().flatten().map(ComputeNodeState::n_busy).sum(),
        }
    }

    fn compute_bank(&mut self) -> &mut QueueBank {
        self.compute_queues.as_mut().unwrap_or(&mut self.queues)
    }

    /// Sends a job sitting at `v` to its next queue under the static policy.
    fn place_static(&mut self, job: JobId, v: NodeId) {
        let Routing::Static { policy } = &self.routing else {
            unreachable!("static placement outside joint_lp")
        };
        let (m, c) = (self.jobs[job].source, self.jobs[job].task_type);
        let can_process = self.mu.get(v, c) > 0.0;
        match lp_policy_step(policy, m, c, v, can_process, &mut self.policy_rng) {
            PolicyAction::Process => self.compute_bank().push(v, c, job),
            PolicyAction::Forward(next) => self.queues.push(v, next, job),
        }
    }

    fn inject(&mut self, task_idx: usize, slot: u32) {
        let id = self.jobs.len();
        let task = &self.tasks[task_idx];
        let (m, c) = (task.source, task.task_type);
        self.jobs.push(Job::new(id, task_idx, task, slot));
        match &self.routing {
            Routing::Joint { .. } => self.queues.push(m, c, id),
            Routing::Separated { biased_offload, .. } => {
                let candidates = offload_candidates(m, c, &self.servers, &self.mu);
                let bank = self.compute_queues.as_ref().expect("separate compute queues");
                let backlog = |i: NodeId| bank.len(i, c);
                let dest = if *biased_offload {
                    spbp_offload_destination(m, c, &self.bias, &candidates, backlog)
                } else {
                    bp_offload_destination(&candidates, backlog, &mut self.policy_rng)
                }
                .expect("extended graph guarantees a capable node");
                self.jobs[id].destination = Some(dest);
                if dest == m {
                    self.compute_bank().push(m, c, id);
                } else {
                    self.queues.push(m, dest, id);
                }
            }
            Routing::Static { .. } => self.place_static(id, m),
        }
    }

    fn deliver(&mut self, job: JobId, to: NodeId, commodity: usize) {
        match &self.routing {
            Routing::Joint { .. } => self.queues.push(to, commodity, job),
            Routing::Separated { .. } => {
                if to == commodity {
                    let c: TaskType = self.jobs[job].task_type;
                    self.compute_bank().push(to, c, job);
                } else {
                    self.queues.push(to, commodity, job);
                }
            }
            Routing::Static { .. } => self.place_static(job, to),
        }
    }

    /// Advances one slot.
    pub fn step(&mut self) -> Accounting {
        let slot = self.slot;
        let rates = realize_link_rates(&self.topo, &self.cfg.fading, &mut self.fading_rng);

        for k in 0..self.tasks.len() {
            let count = self.arrivals.sample(k, &self.tasks[k], slot);
            for _ in 0..count {
                self.inject(k, slot);
            }
        }

        let (now, end) = (slot as f64, slot as f64 + 1.0);
        let mut compute = std::mem::take(&mut self.compute);
        for node in compute.iter_mut().flatten() {
            let done = node.step_compute(self.compute_bank(), now, end);
            for c in done {
                let job = &mut self.jobs[c.job];
                job.processed_at = Some(c.node);
                job.fetch_time = Some(c.fetch_time);
                job.completion_time = Some(c.finish_time);
                self.completed += 1;
                self.completions.push(c);
            }
        }
        self.compute = compute;

        let qs = self.queues.snapshot();
        if self.cfg.trace {
            for v in 0..qs.n_nodes() {
                for (c, &b) in qs.row(v).iter().enumerate() {
                    if b > 0 {
                        self.queue_trace.push(QueueTraceRow {
                            slot,
                            node: v,
                            commodity: c,
                            backlog: b,
                        });
                    }
                }
            }
        }
        let selection = match &self.routing {
            Routing::Joint { bias } | Routing::Separated { bias, .. } => select_commodities(&self.topo, &qs, bias),
            Routing::Static { .. } => next_hop_selection(&self.topo, &qs),
        };
        let decision = schedule_slot(&self.topo, &self.cg, &qs, selection, &rates);
        let mut moved = Vec::new();
        for t in &decision.plan.transmissions {
            let batch = self.queues.dequeue_up_to(t.from, t.commodity, t.quota as usize);
            if self.cfg.trace {
                self.schedule_trace.push(ScheduleTraceRow {
                    slot,
                    link: t.link,
                    from: t.from,
                    to: t.to,
                    commodity: t.commodity,
                    quota: t.quota,
                    moved: batch.len() as u32,
                });
            }
            for job in batch {
                self.jobs[job].hops += 1;
                moved.push((job, t.to, t.commodity));
            }
        }
        for (job, to, commodity) in moved {
            self.deliver(job, to, commodity);
        }

        self.slot += 1;
        let acc = self.accounting();
        self.backlog.push((acc.queued + acc.processing) as u64);
        acc
    }

    pub fn records(&self) -> Vec<MetricsRecord> {
        self.jobs
            .iter()
            .map(|j| MetricsRecord {
                seed: self.cfg.seed,
                scheme: self.cfg.scheme,
                load: self.cfg.load,
                job_id: j.id,
                task_type: j.task_type,
                source: j.source,
                arrival_slot: j.arrival_slot,
                completion_time: j.completion_time,
                hops: j.hops,
                processed_at: j.processed_at,
                censored: j.completion_time.is_none(),
            })
            .collect()
    }

    pub fn finish(self) -> RunOutput {
        RunOutput {
            records: self.records(),
            backlog: self.backlog,
            completions: self.completions,
            queue_trace: self.queue_trace,
            schedule_trace: self.schedule_trace,
            lp: self.lp,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    /// Jobs in the system (queued or in service) after each slot.
    pub backlog: Vec<u64>,
    pub completions: Vec<Completion>,
    pub queue_trace: Vec<QueueTraceRow>,
    pub schedule_trace: Vec<ScheduleTraceRow>,
    pub lp: Option<(FlowProblem, FlowSolution)>,
}

/// Runs a full horizon; unfinished jobs come back marked censored.
pub fn run_instance(instance: &Instance, cfg: &SimConfig) -> Result<RunOutput> {
    let mut sim = Simulation::new(instance, cfg)?;
    for _ in 0..cfg.horizon {
        sim.step();
    }
    Ok(sim.finish())
}

/// Generates the instance from seeds and runs it.
pub fn run(
    network_seed: u64,
    scenario: Scenario,
    gen: &GenParams,
    traffic: &TaskGenParams,
    cfg: &SimConfig,
) -> Result<RunOutput> {
    let traffic = TaskGenParams {
        horizon: cfg.horizon,
        ..traffic.clone()
    };
    let instance = Instance::generate(network_seed, cfg.seed, scenario, gen, &traffic)?;
    run_instance(&instance, cfg)
}
