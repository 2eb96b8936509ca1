//! Continuous-time job execution at computing nodes.
//!
//! A node with `P` processors serves a type-`c` job in `P / mu_c` slots, so
//! with every processor busy on type `c` the node drains exactly `mu_c` jobs
//! per slot. A processor that frees up at time `tau` immediately fetches from
//! the type maximizing `Q_c(tau) / mu_c`.

use crate::extended::TaskType;
use crate::netgraph::NodeId;
use crate::queueing::{JobId, QueueBank};

pub const DEFAULT_PROCESSORS: usize = 4;

/// Type with the largest backlog-to-rate ratio among types this node can
/// serve and that have work queued. Ties go to the lowest type.
pub fn pick_commodity(backlog: &[usize], mu: &[f64]) -> Option<TaskType> {
    let mut best: Option<(TaskType, f64)> = None;
    for (c, (&q, &m)) in backlog.iter().zip(mu).enumerate() {
        if m <= 0.0 || q == 0 {
            continue;
        }
        let ratio = q as f64 / m;
        if best.is_none_or(|(_, r)| ratio > r) {
            best = Some((c, ratio));
        }
    }
    best.map(|(c, _)| c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Busy {
    pub job: JobId,
    pub task_type: TaskType,
    pub fetch_time: f64,
    pub finish_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Completion {
    pub job: JobId,
    pub node: NodeId,
    pub task_type: TaskType,
    pub fetch_time: f64,
    pub finish_time: f64,
}

#[derive(Debug, Clone)]
pub struct ComputeNodeState {
    pub node: NodeId,
    processors: Vec<Option<Busy>>,
    mu: Vec<f64>,
}

impl ComputeNodeState {
    pub fn new(node: NodeId, processors: usize, mu: &[f64]) -> Self {
        assert!(processors >= 1, "a computing node needs a processor");
        ComputeNodeState {
            node,
            processors: vec![None; processors],
            mu: mu.to_vec(),
        }
    }

    pub fn processor_count(&self) -> usize {
        self.processors.len()
    }

    pub fn busy(&self) -> impl Iterator<Item = &Busy> {
        self.processors.iter().flatten()
    }

    pub fn n_busy(&self) -> usize {
        self.busy().count()
    }

    fn try_fetch(&mut self, slot: usize, queues: &mut QueueBank, now: f64) {
        let backlog: Vec<usize> = (0..self.mu.len()).map(|c| queues.len(self.node, c)).collect();
        let Some(c) = pick_commodity(&backlog, &self.mu) else {
            return;
        };
        let job = queues.pop(self.node, c).expect("picked type has backlog");
        self.processors[slot] = Some(Busy {
            job,
            task_type: c,
            fetch_time: now,
            finish_time: now + self.processors.len() as f64 / self.mu[c],
        });
    }

    /// Runs the node's event loop over `[now, horizon)`, fetching from
    /// `queues` (commodity = task type) and returning completions in time
    /// order.
    pub fn step_compute(&mut self, queues: &mut QueueBank, now: f64, horizon: f64) -> Vec<Completion> {
        debug_assert!(now <= horizon);
        for p in 0..self.processors.len() {
            if self.processors[p].is_none() {
                self.try_fetch(p, queues, now);
            }
        }
        let mut done = Vec::new();
        loop {
            let next = self
                .processors
                .iter()
                .enumerate()
                .filter_map(|(p, b)| b.map(|b| (p, b)))
                .filter(|(_, b)| b.finish_time < horizon)
                .min_by(|x, y| x.1.finish_time.total_cmp(&y.1.finish_time).then(x.0.cmp(&y.0)));
            let Some((p, busy)) = next else { break };
            done.push(Completion {
                job: busy.job,
                node: self.node,
                task_type: busy.task_type,
                fetch_time: busy.fetch_time,
                finish_time: busy.finish_time,
            });
            self.processors[p] = None;
            self.try_fetch(p, queues, busy.finish_time);
        }
        done
    }
}
