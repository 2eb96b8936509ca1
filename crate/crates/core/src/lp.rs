//! Mean-field offloading LP: per-task link flows `f[k][arc]` and processing
//! rates `g[k][v]` minimizing total unit-cost makespan under conservation,
//! completeness and capacity constraints.
//!
//! With a single task type every node can absorb every task's flow at the
//! same unit cost, so the LP collapses to one min-cost flow from a super
//! source (task arrivals) to a super sink (processing edges `v -> t` with
//! capacity `psi(v)`). We solve that exactly with successive shortest paths
//! and then split the aggregate flow into per-task flows by path
//! decomposition. Any such split is an optimal point of the per-task LP.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extended::{ServiceRates, TaskType};
use crate::netgraph::{ConflictGraph, LinkId, NodeId, Topology};
use crate::traffic::TaskSpec;

/// Constraint tolerance for solutions.
pub const LP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub from: NodeId,
    pub to: NodeId,
    pub link: LinkId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpTask {
    pub source: NodeId,
    pub task_type: TaskType,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowProblem {
    pub n_nodes: usize,
    /// Arc `2l` is link `l` forward (`a -> b`), arc `2l + 1` backward.
    pub arcs: Vec<Arc>,
    pub tasks: Vec<LpTask>,
    pub arc_capacity: Vec<f64>,
    pub arc_cost: Vec<f64>,
    pub node_capacity: Vec<f64>,
    /// Zero on nodes with zero capacity; those cannot process anything.
    pub node_cost: Vec<f64>,
    pub node_demand: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    pub status: LpStatus,
    /// `flows[k][arc]`
    pub flows: Vec<Vec<f64>>,
    /// `processing[k][v]`
    pub processing: Vec<Vec<f64>>,
    /// Per-task unit-cost makespan.
    pub task_cost: Vec<f64>,
    pub objective: f64,
}

impl FlowSolution {
    fn infeasible(p: &FlowProblem) -> Self {
        FlowSolution {
            status: LpStatus::Infeasible,
            flows: vec![vec![0.0; p.arcs.len()]; p.tasks.len()],
            processing: vec![vec![0.0; p.n_nodes]; p.tasks.len()],
            task_cost: vec![0.0; p.tasks.len()],
            objective: f64::NAN,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Instantiates the LP for a single-type instance: `psi(v) = mu_v`,
/// `psi(e) = r_e / max(deg_conflict(e), 1)`, unit costs `1 / psi` and unit
/// demand.
pub fn build_lp(topo: &Topology, tasks: &[TaskSpec], mu: &ServiceRates, cg: &ConflictGraph) -> Result<FlowProblem> {
    if mu.n_types() != 1 || tasks.iter().any(|t| t.task_type != 0) {
        return Err(Error::MultiType);
    }
    if cg.n_links != topo.n_links() || mu.n_nodes() != topo.n_nodes() {
        return Err(Error::Mismatch("conflict graph or rates do not match topology".into()));
    }
    let mut arcs = Vec::with_capacity(2 * topo.n_links());
    let mut arc_capacity = Vec::with_capacity(2 * topo.n_links());
    for (l, link) in topo.links.iter().enumerate() {
        let cap = link.rate / cg.degree(l).max(1) as f64;
        arcs.push(Arc {
            from: link.a,
            to: link.b,
            link: l,
        });
        arcs.push(Arc {
            from: link.b,
            to: link.a,
            link: l,
        });
        arc_capacity.extend([cap, cap]);
    }
    let arc_cost = arc_capacity.iter().map(|c| 1.0 / c).collect();
    let node_capacity: Vec<f64> = (0..topo.n_nodes()).map(|v| mu.get(v, 0)).collect();
    let node_cost = node_capacity
        .iter()
        .map(|&c| if c > 0.0 { 1.0 / c } else { 0.0 })
        .collect();
    let tasks = tasks
        .iter()
        .map(|t| LpTask {
            source: t.source,
            task_type: t.task_type,
            rate: t.rate,
        })
        .collect();
    Ok(FlowProblem {
        n_nodes: topo.n_nodes(),
        arcs,
        tasks,
        arc_capacity,
        arc_cost,
        node_capacity,
        node_cost,
        node_demand: vec![1.0; topo.n_nodes()],
    })
}

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
    rev: usize,
}

struct Network {
    graph: Vec<Vec<Edge>>,
}

impl Network {
    fn new(n: usize) -> Self {
        Network {
            graph: vec![Vec::new(); n],
        }
    }

    /// Returns (node, index) of the forward edge.
    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) -> (usize, usize) {
        let fwd = self.graph[from].len();
        let back = self.graph[to].len() + usize::from(from == to);
        self.graph[from].push(Edge { to, cap, cost, rev: back });
        self.graph[to].push(Edge {
            to: from,
            cap: 0.0,
            cost: -cost,
            rev: fwd,
        });
        (from, fwd)
    }

    fn flow_on(&self, (node, idx): (usize, usize)) -> f64 {
        let e = &self.graph[node][idx];
        self.graph[e.to][e.rev].cap
    }
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Successive shortest paths with Johnson potentials. Returns the amount
/// that could not be routed.
fn min_cost_flow(net: &mut Network, s: usize, t: usize, demand: f64, eps: f64) -> f64 {
    let n = net.graph.len();
    let mut potential = vec![0.0; n];
    let mut remaining = demand;
    while remaining > eps {
        let mut dist = vec![f64::INFINITY; n];
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[s] = 0.0;
        heap.push(Item(0.0, s));
        while let Some(Item(d, v)) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for (i, e) in net.graph[v].iter().enumerate() {
                if e.cap <= eps {
                    continue;
                }
                let reduced = (e.cost + potential[v] - potential[e.to]).max(0.0);
                let nd = d + reduced;
                if nd < dist[e.to] {
                    dist[e.to] = nd;
                    prev[e.to] = Some((v, i));
                    heap.push(Item(nd, e.to));
                }
            }
        }
        if !dist[t].is_finite() {
            break;
        }
        for v in 0..n {
            potential[v] += dist[v].min(dist[t]);
        }
        let mut push = remaining;
        let mut v = t;
        while let Some((u, i)) = prev[v] {
            push = push.min(net.graph[u][i].cap);
            v = u;
        }
        let mut v = t;
        while let Some((u, i)) = prev[v] {
            let rev = net.graph[u][i].rev;
            net.graph[u][i].cap -= push;
            net.graph[v][rev].cap += push;
            v = u;
        }
        remaining -= push;
    }
    remaining.max(0.0)
}

/// Exact optimum of the single-type LP, or `Infeasible` when the arrivals
/// cannot all be routed to processing capacity.
pub fn solve_lp(p: &FlowProblem) -> Result<FlowSolution> {
    let n = p.n_nodes;
    let total: f64 = p.tasks.iter().map(|t| t.rate).sum();
    if p.tasks.iter().any(|t| !(t.rate >= 0.0 && t.rate.is_finite())) {
        return Err(Error::Numerical("task rates must be finite and non-negative".into()));
    }
    let scale = total.max(1.0);
    let eps = 1e-12 * scale;

    let (s, t) = (n, n + 1);
    let mut net = Network::new(n + 2);
    let mut supply = vec![0.0; n];
    for task in &p.tasks {
        supply[task.source] += task.rate;
    }
    for (v, &amount) in supply.iter().enumerate() {
        if amount > 0.0 {
            net.add(s, v, amount, 0.0);
        }
    }
    let arc_edges: Vec<_> = p
        .arcs
        .iter()
        .enumerate()
        .map(|(i, a)| net.add(a.from, a.to, p.arc_capacity[i], p.arc_cost[i]))
        .collect();
    let node_edges: Vec<Option<(usize, usize)>> = (0..n)
        .map(|v| {
            let cap = p.node_capacity[v] / p.node_demand[v];
            (cap > 0.0).then(|| net.add(v, t, cap, p.node_cost[v]))
        })
        .collect();

    let unrouted = min_cost_flow(&mut net, s, t, total, eps);
    if unrouted > 1e-9 * scale {
        return Ok(FlowSolution::infeasible(p));
    }

    let mut arc_flow: Vec<f64> = arc_edges.iter().map(|&e| net.flow_on(e).max(0.0)).collect();
    let mut node_flow: Vec<f64> = node_edges
        .iter()
        .map(|e| e.map_or(0.0, |e| net.flow_on(e).max(0.0)))
        .collect();
    // opposite flows on one link form a positive-cost cycle; cancel them
    for l in 0..arc_flow.len() / 2 {
        let m = arc_flow[2 * l].min(arc_flow[2 * l + 1]);
        arc_flow[2 * l] -= m;
        arc_flow[2 * l + 1] -= m;
    }
    let (flows, processing) = decompose(p, &mut arc_flow, &mut node_flow, eps)?;
    Ok(finish(p, flows, processing))
}

fn finish(p: &FlowProblem, flows: Vec<Vec<f64>>, processing: Vec<Vec<f64>>) -> FlowSolution {
    let task_cost: Vec<f64> = flows
        .iter()
        .zip(&processing)
        .map(|(f, g)| {
            let comm: f64 = f.iter().zip(&p.arc_cost).map(|(x, u)| x * u).sum();
            let comp: f64 = g.iter().zip(&p.node_cost).map(|(x, u)| x * u).sum();
            comm + comp
        })
        .collect();
    FlowSolution {
        status: LpStatus::Optimal,
        objective: task_cost.iter().sum(),
        flows,
        processing,
        task_cost,
    }
}

type Split = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Peels source-to-processor paths off the aggregate flow, task by task.
fn decompose(p: &FlowProblem, arc_flow: &mut [f64], node_flow: &mut [f64], eps: f64) -> Result<Split> {
    let n = p.n_nodes;
    let mut out_arcs = vec![Vec::new(); n];
    for (i, a) in p.arcs.iter().enumerate() {
        out_arcs[a.from].push(i);
    }
    let mut flows = vec![vec![0.0; p.arcs.len()]; p.tasks.len()];
    let mut processing = vec![vec![0.0; n]; p.tasks.len()];
    for (k, task) in p.tasks.iter().enumerate() {
        let mut need = task.rate;
        while need > eps {
            let mut path: Vec<usize> = Vec::new();
            let mut on_path = vec![usize::MAX; n];
            let mut v = task.source;
            on_path[v] = 0;
            let end = loop {
                if node_flow[v] > eps {
                    break Some(v);
                }
                let Some(&arc) = out_arcs[v].iter().find(|&&a| arc_flow[a] > eps) else {
                    break None;
                };
                let next = p.arcs[arc].to;
                if on_path[next] != usize::MAX {
                    // flow cycle from float noise: cancel it and resume
                    let start = on_path[next];
                    let cycle = &path[start..];
                    let m = cycle
                        .iter()
                        .chain(std::iter::once(&arc))
                        .map(|&a| arc_flow[a])
                        .fold(f64::INFINITY, f64::min);
                    for &a in cycle.iter().chain(std::iter::once(&arc)) {
                        arc_flow[a] -= m;
                    }
                    for &a in &path[start..] {
                        on_path[p.arcs[a].to] = usize::MAX;
                    }
                    path.truncate(start);
                    v = next;
                    on_path[v] = start;
                    continue;
                }
                path.push(arc);
                on_path[next] = path.len();
                v = next;
            };
            let Some(end) = end else {
                if need > 1e-9 * task.rate.max(1.0) {
                    return Err(Error::Numerical(format!(
                        "flow decomposition stalled for task {k} with {need} unassigned"
                    )));
                }
                break;
            };
            let amount = path
                .iter()
                .map(|&a| arc_flow[a])
                .fold(need.min(node_flow[end]), f64::min);
            for &a in &path {
                arc_flow[a] -= amount;
                flows[k][a] += amount;
            }
            node_flow[end] -= amount;
            processing[k][end] += amount;
            need -= amount;
        }
        // absorb rounding residue at the last processing node
        if need > 0.0 {
            if let Some(v) = processing[k].iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(v, _)| v) {
                processing[k][v] += need;
            }
        }
    }
    Ok((flows, processing))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResidualReport {
    pub conservation: f64,
    pub completeness: f64,
    pub node_capacity: f64,
    pub link_capacity: f64,
    pub nonnegativity: f64,
    /// Ids of constraints whose residual exceeds the tolerance.
    pub violations: Vec<String>,
}

impl ResidualReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max(&self) -> f64 {
        [
            self.conservation,
            self.completeness,
            self.node_capacity,
            self.link_capacity,
            self.nonnegativity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Recomputes every constraint from the solution values.
pub fn validate_solution(p: &FlowProblem, s: &FlowSolution) -> ResidualReport {
    let mut r = ResidualReport::default();
    let flag = |value: f64, slot: &mut f64, id: String, violations: &mut Vec<String>| {
        *slot = slot.max(value);
        if value > LP_TOLERANCE {
            violations.push(id);
        }
    };
    let mut violations = Vec::new();
    for (k, task) in p.tasks.iter().enumerate() {
        let f = &s.flows[k];
        let g = &s.processing[k];
        let mut balance = vec![0.0; p.n_nodes];
        balance[task.source] += task.rate;
        for (i, a) in p.arcs.iter().enumerate() {
            balance[a.to] += f[i];
            balance[a.from] -= f[i];
        }
        for v in 0..p.n_nodes {
            let res = (balance[v] - g[v]).abs();
            flag(res, &mut r.conservation, format!("conservation[task={k},node={v}]"), &mut violations);
        }
        let res = (task.rate - g.iter().sum::<f64>()).abs();
        flag(res, &mut r.completeness, format!("completeness[task={k}]"), &mut violations);
        let neg = f.iter().chain(g).fold(0.0f64, |m, &x| m.max(-x));
        flag(neg, &mut r.nonnegativity, format!("nonnegativity[task={k}]"), &mut violations);
    }
    for v in 0..p.n_nodes {
        let used: f64 = s.processing.iter().map(|g| g[v] * p.node_demand[v]).sum();
        let res = (used - p.node_capacity[v]).max(0.0);
        flag(res, &mut r.node_capacity, format!("node_capacity[node={v}]"), &mut violations);
    }
    // both directions of a link share its capacity
    for l in 0..p.arcs.len() / 2 {
        let used: f64 = s.flows.iter().map(|f| f[2 * l] + f[2 * l + 1]).sum();
        let res = (used - p.arc_capacity[2 * l]).max(0.0);
        flag(res, &mut r.link_capacity, format!("link_capacity[link={l}]"), &mut violations);
    }
    r.violations = violations;
    r
}

/// CPLEX LP text for cross-checking with an external solver. Variables are
/// `f_k_i` (task `k`, arc `i`) and `g_k_v`.
pub fn to_lp_format(p: &FlowProblem) -> String {
    let mut out = String::from("\\ mean-field offloading LP\nMinimize\n obj:");
    for k in 0..p.tasks.len() {
        for (i, u) in p.arc_cost.iter().enumerate() {
            let _ = write!(out, " + {u} f_{k}_{i}");
        }
        for (v, u) in p.node_cost.iter().enumerate() {
            let _ = write!(out, " + {u} g_{k}_{v}");
        }
    }
    out.push_str("\nSubject To\n");
    for (k, task) in p.tasks.iter().enumerate() {
        for v in 0..p.n_nodes {
            let _ = write!(out, " cons_{k}_{v}: g_{k}_{v}");
            for (i, a) in p.arcs.iter().enumerate() {
                if a.from == v {
                    let _ = write!(out, " + f_{k}_{i}");
                }
                if a.to == v {
                    let _ = write!(out, " - f_{k}_{i}");
                }
            }
            let rhs = if v == task.source { task.rate } else { 0.0 };
            let _ = writeln!(out, " = {rhs}");
        }
        let _ = write!(out, " done_{k}:");
        for v in 0..p.n_nodes {
            let _ = write!(out, " + g_{k}_{v}");
        }
        let _ = writeln!(out, " = {}", task.rate);
    }
    for v in 0..p.n_nodes {
        let _ = write!(out, " node_{v}:");
        for k in 0..p.tasks.len() {
            let _ = write!(out, " + {} g_{k}_{v}", p.node_demand[v]);
        }
        let _ = writeln!(out, " <= {}", p.node_capacity[v]);
    }
    for l in 0..p.arcs.len() / 2 {
        let _ = write!(out, " link_{l}:");
        for k in 0..p.tasks.len() {
            let _ = write!(out, " + f_{k}_{} + f_{k}_{}", 2 * l, 2 * l + 1);
        }
        let _ = writeln!(out, " <= {}", p.arc_capacity[2 * l]);
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::netgraph::build_conflict_graph;
    use crate::traffic::TaskMode;

    fn path3_problem(rate: f64) -> FlowProblem {
        let (topo, mu) = fixtures::path3();
        let cg = build_conflict_graph(&topo);
        let tasks = [TaskSpec {
            source: 0,
            task_type: 0,
            rate,
            mode: TaskMode::Streaming,
        }];
        build_lp(&topo, &tasks, &mu, &cg).unwrap()
    }

    #[test]
    fn path3_costs() {
        let p = path3_problem(1.0);
        assert_eq!(p.node_cost, vec![1.0, 0.0, 0.25]);
        assert!(p.arc_cost.iter().all(|&u| u == 0.5));
        assert!(p.arc_capacity.iter().all(|&c| c == 2.0));
    }

    #[test]
    fn path3_optimum_is_local() {
        let p = path3_problem(1.0);
        let s = solve_lp(&p).unwrap();
        assert!(s.is_optimal());
        // pure strategies: local costs 1, offloading costs 0.5 + 0.5 + 0.25
        let local = p.node_cost[0];
        let offload = p.arc_cost[0] + p.arc_cost[2] + p.node_cost[2];
        assert_eq!(local.min(offload), 1.0);
        assert!((s.objective - 1.0).abs() < 1e-9);
        assert!((s.processing[0][0] - 1.0).abs() < 1e-9);
        assert!(validate_solution(&p, &s).passes());
    }

    #[test]
    fn path3_mixed_optimum_above_local_capacity() {
        // local 1 at cost 1, remaining 1.5 offloaded at 1.25
        let p = path3_problem(2.5);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - (1.0 + 1.5 * 1.25)).abs() < 1e-9);
        let r = validate_solution(&p, &s);
        assert!(r.passes(), "{r:?}");
    }

    #[test]
    fn path3_overload_is_infeasible() {
        let s = solve_lp(&path3_problem(4.0)).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn zero_demand_is_all_zero() {
        let p = path3_problem(0.0);
        let s = solve_lp(&p).unwrap();
        assert!(s.is_optimal());
        assert_eq!(s.objective, 0.0);
        assert!(s.flows.iter().flatten().chain(s.processing.iter().flatten()).all(|&x| x == 0.0));
        let r = validate_solution(&p, &s);
        assert_eq!(r.max(), 0.0);
    }

    #[test]
    fn multi_type_rejected() {
        let topo = crate::netgraph::generate_topology(0, &Default::default()).unwrap();
        let mu = crate::extended::derive_typed_service_rates(&topo, &crate::extended::RateScheme::two_type()).unwrap();
        let cg = build_conflict_graph(&topo);
        assert!(matches!(build_lp(&topo, &[], &mu, &cg), Err(Error::MultiType)));
    }

    #[test]
    fn negative_control_reports_violations() {
        let p = path3_problem(1.0);
        let mut s = solve_lp(&p).unwrap();
        s.processing[0][0] = 0.2;
        s.flows[0][0] = 3.0;
        let r = validate_solution(&p, &s);
        assert!(!r.passes());
        assert!(r.violations.iter().any(|v| v.starts_with("completeness")));
        assert!(r.violations.iter().any(|v| v.starts_with("conservation")));
        assert!(r.violations.iter().any(|v| v.starts_with("link_capacity")));
    }

    #[test]
    fn lp_text_names_every_constraint() {
        let text = to_lp_format(&path3_problem(1.0));
        assert!(text.contains("cons_0_2"));
        assert!(text.contains("done_0"));
        assert!(text.contains("link_1:"));
        assert!(text.ends_with("End\n"));
    }
}
