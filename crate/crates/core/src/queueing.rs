//! Per-node, per-commodity FIFO queues of job ids.
//!
//! Only physical nodes host queues; virtual sinks never hold jobs.

use std::collections::VecDeque;

use crate::netgraph::NodeId;

pub type JobId = usize;

#[derive(Debug, Clone)]
pub struct QueueBank {
    n_nodes: usize,
    n_commodities: usize,
    queues: Vec<VecDeque<JobId>>,
    total: usize,
}

impl QueueBank {
    pub fn new(n_nodes: usize, n_commodities: usize) -> Self {
        QueueBank {
            n_nodes,
            n_commodities,
            queues: vec![VecDeque::new(); n_nodes * n_commodities],
            total: 0,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_commodities(&self) -> usize {
        self.n_commodities
    }

    fn slot(&self, node: NodeId, commodity: usize) -> usize {
        assert!(node < self.n_nodes && commodity < self.n_commodities);
        node * self.n_commodities + commodity
    }

    pub fn push(&mut self, node: NodeId, commodity: usize, job: JobId) {
        let s = self.slot(node, commodity);
        self.queues[s].push_back(job);
        self.total += 1;
    }

    pub fn enqueue(&mut self, node: NodeId, commodity: usize, jobs: impl IntoIterator<Item = JobId>) {
        let s = self.slot(node, commodity);
        let before = self.queues[s].len();
        self.queues[s].extend(jobs);
        self.total += self.queues[s].len() - before;
    }

    pub fn pop(&mut self, node: NodeId, commodity: usize) -> Option<JobId> {
        let s = self.slot(node, commodity);
        let job = self.queues[s].pop_front();
        if job.is_some() {
            self.total -= 1;
        }
        job
    }

    /// Removes and returns the `min(n, backlog)` oldest jobs.
    pub fn dequeue_up_to(&mut self, node: NodeId, commodity: usize, n: usize) -> Vec<JobId> {
        let s = self.slot(node, commodity);
        let take = n.min(self.queues[s].len());
        self.total -= take;
        self.queues[s].drain(..take).collect()
    }

    pub fn len(&self, node: NodeId, commodity: usize) -> usize {
        self.queues[self.slot(node, commodity)].len()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn jobs(&self, node: NodeId, commodity: usize) -> impl Iterator<Item = JobId> + '_ {
        self.queues[self.slot(node, commodity)].iter().copied()
    }

    pub fn snapshot(&self) -> QueueState {
        QueueState {
            n_nodes: self.n_nodes,
            n_commodities: self.n_commodities,
            counts: self.queues.iter().map(|q| q.len() as u32).collect(),
        }
    }
}

/// Backlog snapshot taken once per slot; read by commodity selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueState {
    n_nodes: usize,
    n_commodities: usize,
    counts: Vec<u32>,
}

impl QueueState {
    pub fn zeros(n_nodes: usize, n_commodities: usize) -> Self {
        QueueState {
            n_nodes,
            n_commodities,
            counts: vec![0; n_nodes * n_commodities],
        }
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Self {
        let n_commodities = rows.first().map_or(0, Vec::len);
        QueueState {
            n_nodes: rows.len(),
            n_commodities,
            counts: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_commodities(&self) -> usize {
        self.n_commodities
    }

    pub fn get(&self, node: NodeId, commodity: usize) -> u32 {
        self.counts[node * self.n_commodities + commodity]
    }

    pub fn set(&mut self, node: NodeId, commodity: usize, value: u32) {
        self.counts[node * self.n_commodities + commodity] = value;
    }

    pub fn row(&self, node: NodeId) -> &[u32] {
        &self.counts[node * self.n_commodities..(node + 1) * self.n_commodities]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}
