//! Shortest-path-biased backpressure: bias table, per-link commodity
//! selection, link utilities, local greedy scheduling and the per-slot
//! transmission plan.
//!
//! Wireless links are undirected in the conflict graph. Each link id `l`
//! carries two directions: `Dir::Forward` is `a -> b`, `Dir::Backward` is
//! `b -> a`. Both directions share one conflict vertex and the stronger one
//! represents the link when scheduling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::extended::{ExtendedGraph, TaskType};
use crate::netgraph::{ConflictGraph, LinkId, NodeId, Topology};
use crate::queueing::QueueState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dir {
    Forward,
    Backward,
}

impl Dir {
    pub const BOTH: [Dir; 2] = [Dir::Forward, Dir::Backward];

    pub fn index(self) -> usize {
        match self {
            Dir::Forward => 0,
            Dir::Backward => 1,
        }
    }

    pub fn endpoints(self, topo: &Topology, link: LinkId) -> (NodeId, NodeId) {
        let l = &topo.links[link];
        match self {
            Dir::Forward => (l.a, l.b),
            Dir::Backward => (l.b, l.a),
        }
    }
}

/// Edge weights and all-pairs shortest distances on the extended graph.
#[derive(Debug, Clone)]
pub struct BiasTable {
    n_physical: usize,
    n_types: usize,
    pub rbar: f64,
    pub rmax: f64,
    /// `(from, to, sigma)` for every directed extended edge.
    pub sigma: Vec<(usize, usize, f64)>,
    /// `dist[i * n_vertices + j]`: shortest sigma-distance from `i` to `j`.
    dist: Vec<f64>,
}

impl BiasTable {
    pub fn n_vertices(&self) -> usize {
        self.n_physical + self.n_types
    }

    pub fn n_physical(&self) -> usize {
        self.n_physical
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    pub fn distance(&self, from: usize, to: usize) -> f64 {
        self.dist[from * self.n_vertices() + to]
    }

    /// `B_i^(c)`: distance from vertex `i` to the sink of type `c`.
    pub fn to_sink(&self, i: usize, c: TaskType) -> f64 {
        self.distance(i, self.n_physical + c)
    }

    pub fn sigma_of(&self, from: usize, to: usize) -> Option<f64> {
        self.sigma
            .iter()
            .find(|&&(f, t, _)| f == from && t == to)
            .map(|&(_, _, w)| w)
    }

    /// Biases for the joint scheme: commodity = task type.
    pub fn type_bias(&self) -> CommodityBias {
        let values = (0..self.n_physical)
            .flat_map(|i| (0..self.n_types).map(move |c| (i, c)))
            .map(|(i, c)| self.to_sink(i, c))
            .collect();
        CommodityBias {
            n_commodities: self.n_types,
            values,
        }
    }

    /// Biases for the separated schemes: commodity = physical destination.
    pub fn destination_bias(&self) -> CommodityBias {
        let n = self.n_physical;
        let values = (0..n)
            .flat_map(|i| (0..n).map(move |d| (i, d)))
            .map(|(i, d)| self.distance(i, d))
            .collect();
        CommodityBias {
            n_commodities: n,
            values,
        }
    }
}

/// Queue-agnostic bias per (physical node, commodity).
#[derive(Debug, Clone, PartialEq)]
pub struct CommodityBias {
    n_commodities: usize,
    values: Vec<f64>,
}

impl CommodityBias {
    pub fn zeros(n_nodes: usize, n_commodities: usize) -> Self {
        CommodityBias {
            n_commodities,
            values: vec![0.0; n_nodes * n_commodities],
        }
    }

    pub fn n_commodities(&self) -> usize {
        self.n_commodities
    }

    pub fn get(&self, node: NodeId, c: usize) -> f64 {
        self.values[node * self.n_commodities + c]
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-target Dijkstra over reversed edges: distances from every vertex
/// to `target`.
fn distances_to(target: usize, reverse_adj: &[Vec<(usize, f64)>]) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; reverse_adj.len()];
    let mut heap = BinaryHeap::new();
    dist[target] = 0.0;
    heap.push(HeapItem(0.0, target));
    while let Some(HeapItem(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(u, w) in &reverse_adj[v] {
            let nd = d + w;
            if nd < dist[u] {
                dist[u] = nd;
                heap.push(HeapItem(nd, u));
            }
        }
    }
    dist
}

/// Weights every extended edge by `rbar * rmax / rate` and solves all-pairs
/// shortest paths, one reverse Dijkstra per target vertex.
pub fn compute_bias_table(eg: &ExtendedGraph) -> Result<BiasTable> {
    let population: Vec<f64> = eg.rate_population().collect();
    let rbar = population.iter().sum::<f64>() / population.len() as f64;
    let rmax = population.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nv = eg.n_vertices();
    let mut reverse_adj = vec![Vec::new(); nv];
    let sigma: Vec<(usize, usize, f64)> = eg
        .directed_edges()
        .into_iter()
        .map(|e| (e.from, e.to, rbar * rmax / e.rate))
        .collect();
    for &(from, to, w) in &sigma {
        reverse_adj[to].push((from, w));
    }
    let mut dist = vec![f64::INFINITY; nv * nv];
    for target in 0..nv {
        let col = distances_to(target, &reverse_adj);
        for (i, d) in col.into_iter().enumerate() {
            dist[i * nv + target] = d;
        }
    }
    let table = BiasTable {
        n_physical: eg.n_physical(),
        n_types: eg.n_types(),
        rbar,
        rmax,
        sigma,
        dist,
    };
    for node in 0..eg.n_physical() {
        for c in 0..eg.n_types() {
            if !table.to_sink(node, c).is_finite() {
                return Err(Error::UnreachableSink {
                    node,
                    sink: eg.sink(c),
                });
            }
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectedChoice {
    pub commodity: usize,
    /// Clamped backpressure `max(U_i - U_j, 0)` at the chosen commodity.
    pub weight: f64,
}

/// Optimal commodity and weight for both directions of every link.
#[derive(Debug, Clone, PartialEq)]
pub struct CommoditySelection {
    choices: Vec<[DirectedChoice; 2]>,
}

impl CommoditySelection {
    pub fn from_choices(choices: Vec<[DirectedChoice; 2]>) -> Self {
        CommoditySelection { choices }
    }

    pub fn get(&self, link: LinkId, dir: Dir) -> DirectedChoice {
        self.choices[link][dir.index()]
    }

    pub fn n_links(&self) -> usize {
        self.choices.len()
    }
}

/// Picks, for each directed link, the commodity with the largest biased
/// backlog differential. Ties go to the lowest commodity index.
pub fn select_commodities(topo: &Topology, qs: &QueueState, bias: &CommodityBias) -> CommoditySelection {
    let nc = qs.n_commodities();
    debug_assert_eq!(nc, bias.n_commodities());
    let choices = (0..topo.n_links())
        .map(|link| {
            Dir::BOTH.map(|dir| {
                let (i, j) = dir.endpoints(topo, link);
                let mut best = 0;
                let mut best_diff = f64::NEG_INFINITY;
                for c in 0..nc {
                    let ui = qs.get(i, c) as f64 + bias.get(i, c);
                    let uj = qs.get(j, c) as f64 + bias.get(j, c);
                    let diff = ui - uj;
                    if diff > best_diff {
                        best_diff = diff;
                        best = c;
                    }
                }
                DirectedChoice {
                    commodity: best,
                    weight: best_diff.max(0.0),
                }
            })
        })
        .collect();
    CommoditySelection { choices }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkUtility {
    pub utility: f64,
    /// Direction that produced `utility`.
    pub dir: Dir,
}

/// Scheduling utility `R * w * 1(Q_i^{c*} > 0)` per link, taking the larger
/// of the two directions (forward wins ties).
pub fn build_utilities(topo: &Topology, sel: &CommoditySelection, qs: &QueueState, rates: &[u32]) -> Vec<LinkUtility> {
    (0..topo.n_links())
        .map(|link| {
            let per_dir = Dir::BOTH.map(|dir| {
                let (i, _) = dir.endpoints(topo, link);
                let choice = sel.get(link, dir);
                if qs.get(i, choice.commodity) > 0 {
                    rates[link] as f64 * choice.weight
                } else {
                    0.0
                }
            });
            if per_dir[1] > per_dir[0] {
                LinkUtility {
                    utility: per_dir[1],
                    dir: Dir::Backward,
                }
            } else {
                LinkUtility {
                    utility: per_dir[0],
                    dir: Dir::Forward,
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub active: Vec<bool>,
}

impl Schedule {
    pub fn empty(n_links: usize) -> Self {
        Schedule {
            active: vec![false; n_links],
        }
    }

    pub fn links(&self) -> Vec<LinkId> {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(e, &on)| on.then_some(e))
            .collect()
    }

    pub fn total_utility(&self, utility: &[f64]) -> f64 {
        self.links().iter().map(|&e| utility[e]).sum()
    }

    pub fn is_independent(&self, cg: &ConflictGraph) -> bool {
        cg.conflicts
            .iter()
            .all(|&(x, y)| !(self.active[x] && self.active[y]))
    }

    /// No unscheduled positive-utility link could be added without a conflict.
    pub fn is_maximal(&self, cg: &ConflictGraph, utility: &[f64]) -> bool {
        (0..cg.n_links).all(|e| {
            self.active[e] || utility[e] <= 0.0 || cg.neighbors(e).iter().any(|&n| self.active[n])
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Decision {
    Undecided,
    In,
    Out,
}

/// Local greedy scheduler. In each round every undecided link whose utility
/// beats all undecided conflicting neighbours (ties to the lower id) joins
/// the schedule and knocks its neighbours out. Zero-utility links never join.
pub fn lgs_schedule(cg: &ConflictGraph, utility: &[f64]) -> Schedule {
    assert_eq!(utility.len(), cg.n_links);
    let beats = |x: LinkId, y: LinkId| match utility[x].total_cmp(&utility[y]) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => x < y,
    };
    let mut state: Vec<Decision> = utility
        .iter()
        .map(|&u| if u > 0.0 { Decision::Undecided } else { Decision::Out })
        .collect();
    loop {
        let winners: Vec<LinkId> = (0..cg.n_links)
            .filter(|&e| state[e] == Decision::Undecided)
            .filter(|&e| {
                cg.neighbors(e)
                    .iter()
                    .all(|&n| state[n] != Decision::Undecided || beats(e, n))
            })
            .collect();
        if winners.is_empty() {
            break;
        }
        for &w in &winners {
            state[w] = Decision::In;
        }
        for &w in &winners {
            for &n in cg.neighbors(w) {
                if state[n] == Decision::Undecided {
                    state[n] = Decision::Out;
                }
            }
        }
    }
    Schedule {
        active: state.into_iter().map(|s| s == Decision::In).collect(),
    }
}

pub const MWIS_BRUTEFORCE_MAX_LINKS: usize = 20;

/// Exact maximum-weight independent set by enumeration. Among equal-value
/// sets the one with the smallest bitmask wins.
pub fn mwis_bruteforce(cg: &ConflictGraph, utility: &[f64]) -> Result<Schedule> {
    let n = cg.n_links;
    if n > MWIS_BRUTEFORCE_MAX_LINKS {
        return Err(Error::InvalidParams(format!(
            "brute-force MWIS limited to {MWIS_BRUTEFORCE_MAX_LINKS} links, got {n}"
        )));
    }
    let nbr: Vec<u32> = (0..n)
        .map(|e| cg.neighbors(e).iter().fold(0u32, |m, &x| m | (1 << x)))
        .collect();
    let mut best_mask = 0u32;
    let mut best = 0.0;
    'masks: for mask in 1u32..(1u32 << n) {
        let mut value = 0.0;
        for e in 0..n {
            if mask & (1 << e) != 0 {
                if nbr[e] & mask != 0 {
                    continue 'masks;
                }
                value += utility[e];
            }
        }
        if value > best {
            best = value;
            best_mask = mask;
        }
    }
    Ok(Schedule {
        active: (0..n).map(|e| best_mask & (1 << e) != 0).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transmission {
    pub link: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub commodity: usize,
    /// Packets allowed this slot; the move itself is `min(quota, backlog)`.
    pub quota: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TransmitPlan {
    pub transmissions: Vec<Transmission>,
}

/// Gives each scheduled link's full real-time rate to its optimal commodity
/// in the winning direction, or nothing if that direction has zero weight.
pub fn make_transmit_plan(
    topo: &Topology,
    sched: &Schedule,
    sel: &CommoditySelection,
    utilities: &[LinkUtility],
    rates: &[u32],
) -> TransmitPlan {
    let transmissions = sched
        .links()
        .into_iter()
        .map(|link| {
            let dir = utilities[link].dir;
            let (from, to) = dir.endpoints(topo, link);
            let choice = sel.get(link, dir);
            Transmission {
                link,
                from,
                to,
                commodity: choice.commodity,
                quota: if choice.weight > 0.0 { rates[link] } else { 0 },
            }
        })
        .collect();
    TransmitPlan { transmissions }
}

/// Everything decided for one slot.
#[derive(Debug, Clone)]
pub struct SlotDecision {
    pub selection: CommoditySelection,
    pub utilities: Vec<LinkUtility>,
    pub schedule: Schedule,
    pub plan: TransmitPlan,
}

/// Steps 1-4 of one slot given an already computed commodity selection.
pub fn schedule_slot(
    topo: &Topology,
    cg: &ConflictGraph,
    qs: &QueueState,
    selection: CommoditySelection,
    rates: &[u32],
) -> SlotDecision {
    let utilities = build_utilities(topo, &selection, qs, rates);
    let values: Vec<f64> = utilities.iter().map(|u| u.utility).collect();
    let schedule = lgs_schedule(cg, &values);
    let plan = make_transmit_plan(topo, &schedule, &selection, &utilities, rates);
    SlotDecision {
        selection,
        utilities,
        schedule,
        plan,
    }
}
