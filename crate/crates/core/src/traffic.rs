//! Task lists and per-slot Poisson job arrivals.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extended::TaskType;
use crate::netgraph::{NodeId, NodeRole, Topology};
use crate::rng::{self, tag, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskMode {
    Streaming,
    /// Arrivals only in slots `start..=end`.
    Bursty { start: u32, end: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub source: NodeId,
    pub task_type: TaskType,
    /// Mean arrivals per slot.
    pub rate: f64,
    pub mode: TaskMode,
}

impl TaskSpec {
    pub fn is_active(&self, slot: u32) -> bool {
        match self.mode {
            TaskMode::Streaming => true,
            TaskMode::Bursty { start, end } => (start..=end).contains(&slot),
        }
    }

    pub fn scaled(&self, factor: f64) -> TaskSpec {
        TaskSpec {
            rate: self.rate * factor,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskGenParams {
    /// Fraction of clients that host a task of a given type.
    pub client_frac_range: (f64, f64),
    /// Unit-load arrival rate range.
    pub base_rate_range: (f64, f64),
    pub bursty_prob: f64,
    pub allow_bursty: bool,
    pub burst_len: u32,
    pub horizon: u32,
    /// Bursts start uniformly in `0..horizon - burst_margin`.
    pub burst_margin: u32,
}

impl Default for TaskGenParams {
    fn default() -> Self {
        TaskGenParams {
            client_frac_range: (0.3, 1.0),
            base_rate_range: (0.5, 1.0),
            bursty_prob: 0.5,
            allow_bursty: true,
            burst_len: 30,
            horizon: 1000,
            burst_margin: 200,
        }
    }
}

/// Creates every task of every type. Rates are `load` times a unit-load
/// draw, and the draws do not depend on `load`, so the same seed at two loads
/// yields the same task placement.
pub fn generate_tasks(
    seed: u64,
    topo: &Topology,
    n_types: usize,
    load: f64,
    params: &TaskGenParams,
) -> Result<Vec<TaskSpec>> {
    if !(load > 0.0 && load.is_finite()) {
        return Err(Error::InvalidParams(format!("load must be positive, got {load}")));
    }
    let (plo, phi) = params.client_frac_range;
    let (rlo, rhi) = params.base_rate_range;
    if !(0.0 <= plo && plo <= phi && phi <= 1.0) || !(0.0 < rlo && rlo <= rhi) {
        return Err(Error::InvalidParams("bad task generation ranges".into()));
    }
    let clients = topo.clients();
    let mut rng = rng::substream(seed, &[tag::TASKS]);
    let mut tasks = Vec::new();
    for c in 0..n_types {
        let p = draw(&mut rng, (plo, phi));
        let count = ((p * clients.len() as f64).round_ties_even() as usize).min(clients.len());
        let mut chosen: Vec<NodeId> = index::sample(&mut rng, clients.len(), count)
            .into_iter()
            .map(|i| clients[i])
            .collect();
        chosen.sort_unstable();
        for source in chosen {
            let rate = load * draw(&mut rng, (rlo, rhi));
            let bursty = rng.random_bool(params.bursty_prob);
            let span = params.horizon.saturating_sub(params.burst_margin).max(1);
            let start = rng.random_range(0..span);
            let mode = if bursty && params.allow_bursty {
                TaskMode::Bursty {
                    start,
                    end: start + params.burst_len,
                }
            } else {
                TaskMode::Streaming
            };
            tasks.push(TaskSpec {
                source,
                task_type: c,
                rate,
                mode,
            });
        }
    }
    Ok(tasks)
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

pub fn validate_tasks(topo: &Topology, n_types: usize, tasks: &[TaskSpec]) -> Result<()> {
    for (i, t) in tasks.iter().enumerate() {
        let bad = |msg: &str| Err(Error::InvalidParams(format!("task {i}: {msg}")));
        if t.source >= topo.n_nodes() || topo.nodes[t.source].role != NodeRole::Client {
            return bad("source is not a client");
        }
        if t.task_type >= n_types {
            return bad("unknown task type");
        }
        if !(t.rate > 0.0 && t.rate.is_finite()) {
            return bad("rate must be positive");
        }
        if let TaskMode::Bursty { start, end } = t.mode {
            if end < start {
                return bad("burst window is reversed");
            }
        }
    }
    Ok(())
}

/// Arrival count for one slot: Poisson(rate) inside the task's window, else 0.
pub fn sample_arrivals(task: &TaskSpec, slot: u32, rng: &mut impl Rng) -> u32 {
    if !task.is_active(slot) {
        return 0;
    }
    match Poisson::new(task.rate) {
        Ok(p) => p.sample(rng) as u32,
        Err(_) => 0,
    }
}

/// One independent arrival stream per task, keyed by (seed, type, source).
pub struct ArrivalStreams {
    streams: Vec<(Option<Poisson<f64>>, SimRng)>,
}

impl ArrivalStreams {
    pub fn new(seed: u64, tasks: &[TaskSpec]) -> Self {
        let streams = tasks
            .iter()
            .map(|t| {
                let rng = rng::substream(seed, &[tag::ARRIVALS, t.task_type as u64, t.source as u64]);
                (Poisson::new(t.rate).ok(), rng)
            })
            .collect();
        ArrivalStreams { streams }
    }

    pub fn sample(&mut self, task_idx: usize, task: &TaskSpec, slot: u32) -> u32 {
        let (dist, rng) = &mut self.streams[task_idx];
        match dist {
            Some(p) if task.is_active(slot) => p.sample(rng) as u32,
            _ => 0,
        }
    }
}

/// A single-packet job; the unit all metrics are computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: usize,
    pub task: usize,
    pub task_type: TaskType,
    pub source: NodeId,
    pub arrival_slot: u32,
    pub hops: u32,
    /// Fixed destination under the separated schemes.
    pub destination: Option<NodeId>,
    pub processed_at: Option<NodeId>,
    pub fetch_time: Option<f64>,
    pub completion_time: Option<f64>,
}

impl Job {
    pub fn new(id: usize, task: usize, spec: &TaskSpec, slot: u32) -> Self {
        Job {
            id,
            task,
            task_type: spec.task_type,
            source: spec.source,
            arrival_slot: slot,
            hops: 0,
            destination: None,
            processed_at: None,
            fetch_time: None,
            completion_time: None,
        }
    }

    pub fn makespan(&self) -> Option<f64> {
        self.completion_time.map(|t| t - self.arrival_slot as f64)
    }
}
