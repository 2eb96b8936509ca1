//! Benchmark schemes: separated offloading (destination fixed at job
//! creation, then SP-BP routing toward it) and the static LP policy.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::extended::{ServiceRates, TaskType};
use crate::lp::{FlowProblem, FlowSolution};
use crate::netgraph::{NodeId, Topology};
use crate::queueing::QueueState;
use crate::spbp::{BiasTable, CommoditySelection, Dir, DirectedChoice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Joint offloading and routing on the extended graph.
    JointSpbp,
    /// Destination by minimal biased backlog, then SP-BP routing.
    SpbpSpbp,
    /// Destination by minimal server backlog, then SP-BP routing.
    BpSpbp,
    /// Per-hop sampling proportional to the LP's static optimal rates.
    JointLp,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::JointSpbp, Scheme::SpbpSpbp, Scheme::BpSpbp, Scheme::JointLp];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::JointSpbp => "joint_spbp",
            Scheme::SpbpSpbp => "spbp_spbp",
            Scheme::BpSpbp => "bp_spbp",
            Scheme::JointLp => "joint_lp",
        }
    }

    pub fn is_separated(self) -> bool {
        matches!(self, Scheme::SpbpSpbp | Scheme::BpSpbp)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OffloadDecision {
    pub job: usize,
    pub destination: NodeId,
}

/// Servers plus the source, restricted to nodes that can process type `c`.
pub fn offload_candidates(m: NodeId, c: TaskType, servers: &[NodeId], mu: &ServiceRates) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = servers
        .iter()
        .copied()
        .chain(std::iter::once(m))
        .filter(|&i| mu.get(i, c) > 0.0)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn argmin_by_score(candidates: &[NodeId], mut score: impl FnMut(NodeId) -> f64) -> Option<NodeId> {
    let mut best: Option<(NodeId, f64)> = None;
    for &i in candidates {
        let s = score(i);
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Destination minimizing `B_m^(i) + B_i^(c) + Q_i^(c)` over the candidates.
pub fn spbp_offload_destination(
    m: NodeId,
    c: TaskType,
    bias: &BiasTable,
    candidates: &[NodeId],
    backlog: impl Fn(NodeId) -> usize,
) -> Option<NodeId> {
    argmin_by_score(candidates, |i| bias.distance(m, i) + bias.to_sink(i, c) + backlog(i) as f64)
}

/// Same rule with both bias terms zeroed: the least-backlogged candidate.
/// Without biases empty queues tie constantly, so ties are broken uniformly
/// at random rather than by id.
pub fn bp_offload_destination(
    candidates: &[NodeId],
    backlog: impl Fn(NodeId) -> usize,
    rng: &mut impl Rng,
) -> Option<NodeId> {
    let least = candidates.iter().map(|&i| backlog(i)).min()?;
    let ties: Vec<NodeId> = candidates.iter().copied().filter(|&i| backlog(i) == least).collect();
    ties.choose(rng).copied()
}

/// Next-hop queues for the LP policy: at node `i` commodity `j` holds the
/// jobs waiting to cross to neighbour `j`. A link's weight in direction
/// `i -> j` is that backlog.
pub fn next_hop_selection(topo: &Topology, qs: &QueueState) -> CommoditySelection {
    let choices = (0..topo.n_links())
        .map(|link| {
            Dir::BOTH.map(|dir| {
                let (i, j) = dir.endpoints(topo, link);
                DirectedChoice {
                    commodity: j,
                    weight: qs.get(i, j) as f64,
                }
            })
        })
        .collect();
    CommoditySelection::from_choices(choices)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyAction {
    Process,
    Forward(NodeId),
}

/// Static forwarding/processing weights from an optimal LP solution.
#[derive(Debug, Clone)]
pub struct StaticPolicy {
    task_index: HashMap<(NodeId, TaskType), usize>,
    /// `out_arcs[v]` = `(arc index, neighbour)`
    out_arcs: Vec<Vec<(usize, NodeId)>>,
    flows: Vec<Vec<f64>>,
    processing: Vec<Vec<f64>>,
}

impl StaticPolicy {
    pub fn from_solution(p: &FlowProblem, s: &FlowSolution) -> Self {
        let mut out_arcs = vec![Vec::new(); p.n_nodes];
        for (i, a) in p.arcs.iter().enumerate() {
            out_arcs[a.from].push((i, a.to));
        }
        let task_index = p
            .tasks
            .iter()
            .enumerate()
            .map(|(k, t)| ((t.source, t.task_type), k))
            .collect();
        StaticPolicy {
            task_index,
            out_arcs,
            flows: s.flows.clone(),
            processing: s.processing.clone(),
        }
    }

    /// `(forward weights per neighbour, process weight)` at `v` for task
    /// `(m, c)`; all zero if the task is unknown.
    pub fn weights(&self, m: NodeId, c: TaskType, v: NodeId) -> (Vec<(NodeId, f64)>, f64) {
        match self.task_index.get(&(m, c)) {
            Some(&k) => (
                self.out_arcs[v].iter().map(|&(a, to)| (to, self.flows[k][a])).collect(),
                self.processing[k][v],
            ),
            None => (self.out_arcs[v].iter().map(|&(_, to)| (to, 0.0)).collect(), 0.0),
        }
    }
}

/// Samples what a job of task `(m, c)` residing at `v` does next, with
/// probabilities proportional to the static rates. Without any weight at
/// `v` the job is processed if `v` can, else forwarded uniformly.
pub fn lp_policy_step(
    policy: &StaticPolicy,
    m: NodeId,
    c: TaskType,
    v: NodeId,
    can_process: bool,
    rng: &mut impl Rng,
) -> PolicyAction {
    let (forward, process) = policy.weights(m, c, v);
    sample_action(&forward, process, can_process, rng)
}

pub fn sample_action(forward: &[(NodeId, f64)], process: f64, can_process: bool, rng: &mut impl Rng) -> PolicyAction {
    let process = if can_process { process.max(0.0) } else { 0.0 };
    let total: f64 = process + forward.iter().map(|(_, w)| w.max(0.0)).sum::<f64>();
    if total <= 0.0 {
        if can_process || forward.is_empty() {
            return PolicyAction::Process;
        }
        return PolicyAction::Forward(forward[rng.random_range(0..forward.len())].0);
    }
    let mut x = rng.random::<f64>() * total;
    for &(to, w) in forward {
        let w = w.max(0.0);
        if x < w {
            return PolicyAction::Forward(to);
        }
        x -= w;
    }
    if process > 0.0 {
        PolicyAction::Process
    } else {
        // rounding left x just past the last positive weight
        let last = forward.iter().rev().find(|(_, w)| *w > 0.0).expect("positive total");
        PolicyAction::Forward(last.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extended::build_extended_graph;
    use crate::fixtures;
    use crate::lp::{build_lp, solve_lp};
    use crate::netgraph::build_conflict_graph;
    use crate::rng;
    use crate::spbp::compute_bias_table;
    use crate::traffic::{TaskMode, TaskSpec};

    fn path3_bias() -> (ServiceRates, BiasTable) {
        let (topo, mu) = fixtures::path3();
        let eg = build_extended_graph(&topo, &mu, 1).unwrap();
        (mu, compute_bias_table(&eg).unwrap())
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("nope".parse::<Scheme>().is_err());
    }

    #[test]
    fn path3_biased_choice_is_local() {
        let (mu, bias) = path3_bias();
        let cands = offload_candidates(0, 0, &[2], &mu);
        assert_eq!(cands, vec![0, 2]);
        // scores: local 0 + 9 + 0 = 9, server 9 + 2.25 + 0 = 11.25
        assert!((bias.distance(0, 2) - 9.0).abs() < 1e-9);
        assert_eq!(spbp_offload_destination(0, 0, &bias, &cands, |_| 0), Some(0));
        assert_eq!(spbp_offload_destination(0, 0, &bias, &cands, |i| if i == 2 { 10 } else { 0 }), Some(0));
        // enough local backlog flips it
        assert_eq!(spbp_offload_destination(0, 0, &bias, &cands, |i| if i == 0 { 3 } else { 0 }), Some(2));
    }

    #[test]
    fn bp_choice_ignores_distance() {
        let mut rng = crate::rng::substream(3, &[]);
        let mut hits = [0usize; 3];
        for _ in 0..3000 {
            let d = bp_offload_destination(&[0, 5, 9], |_| 0, &mut rng).unwrap();
            hits[[0, 5, 9].iter().position(|&x| x == d).unwrap()] += 1;
        }
        assert!(hits.iter().all(|&h| (900..=1100).contains(&h)), "{hits:?}");
        let q = [3, 1, 2];
        assert_eq!(bp_offload_destination(&[4, 5, 6], |i| q[i - 4], &mut rng), Some(5));
        assert_eq!(bp_offload_destination(&[1, 7], |i| if i == 1 { 0 } else { 4 }, &mut rng), Some(1));
    }

    #[test]
    fn incapable_source_is_not_a_candidate() {
        let (topo, _) = fixtures::path3();
        let mu = ServiceRates::new(vec![vec![0.0], vec![0.0], vec![4.0]]).unwrap();
        assert_eq!(offload_candidates(0, 0, &topo.servers(), &mu), vec![2]);
    }

    #[test]
    fn degenerate_policy_weights() {
        let mut rng = rng::substream(0, &[]);
        for _ in 0..100 {
            assert_eq!(sample_action(&[(1, 0.0)], 1.0, true, &mut rng), PolicyAction::Process);
        }
        let n = 30_000;
        let fwd = (0..n)
            .filter(|_| sample_action(&[(1, 2.0)], 1.0, true, &mut rng) == PolicyAction::Forward(1))
            .count();
        assert!((fwd as f64 / n as f64 - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn fallback_when_no_weight() {
        let mut rng = rng::substream(1, &[]);
        assert_eq!(sample_action(&[(1, 0.0), (2, 0.0)], 0.0, true, &mut rng), PolicyAction::Process);
        let mut seen = [false; 3];
        for _ in 0..200 {
            match sample_action(&[(1, 0.0), (2, 0.0)], 0.0, false, &mut rng) {
                PolicyAction::Forward(x) => seen[x] = true,
                PolicyAction::Process => panic!("relay cannot process"),
            }
        }
        assert!(seen[1] && seen[2]);
    }

    #[test]
    fn path3_lp_policy_processes_locally() {
        let (topo, mu) = fixtures::path3();
        let cg = build_conflict_graph(&topo);
        let task = TaskSpec {
            source: 0,
            task_type: 0,
            rate: 1.0,
            mode: TaskMode::Streaming,
        };
        let p = build_lp(&topo, &[task], &mu, &cg).unwrap();
        let s = solve_lp(&p).unwrap();
        let policy = StaticPolicy::from_solution(&p, &s);
        let mut rng = rng::substream(2, &[]);
        for _ in 0..1000 {
            assert_eq!(lp_policy_step(&policy, 0, 0, 0, true, &mut rng), PolicyAction::Process);
        }
    }

    #[test]
    fn next_hop_weights_are_backlogs() {
        let (topo, _) = fixtures::path3();
        let mut qs = QueueState::zeros(3, 3);
        qs.set(1, 2, 4);
        let sel = next_hop_selection(&topo, &qs);
        let link = topo.link_between(1, 2).unwrap();
        assert_eq!(sel.get(link, Dir::Forward), DirectedChoice { commodity: 2, weight: 4.0 });
        assert_eq!(sel.get(link, Dir::Backward).weight, 0.0);
    }
}
