//! Shared helpers for integration tests: random small instances and an
//! independent dense simplex used as the LP oracle.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vsink_core::extended::ServiceRates;
use vsink_core::netgraph::{Link, Node, NodeRole, Topology};
use vsink_core::traffic::{TaskMode, TaskSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Connected random graph on `n` nodes: node 0 is a client, at least one
/// server, the rest random. Single task type.
pub fn random_instance(rng: &mut impl Rng, n: usize, extra_edge_prob: f64) -> (Topology, ServiceRates) {
    assert!(n >= 2);
    let mut roles = vec![NodeRole::Client];
    for _ in 1..n {
        roles.push(match rng.random_range(0..3) {
            0 => NodeRole::Client,
            1 => NodeRole::Server,
            _ => NodeRole::Relay,
        });
    }
    if !roles.contains(&NodeRole::Server) {
        roles[n - 1] = NodeRole::Server;
    }
    let rates: Vec<f64> = roles
        .iter()
        .map(|r| match r {
            NodeRole::Client => rng.random_range(0.5..3.0),
            NodeRole::Server => rng.random_range(1.0..6.0),
            NodeRole::Relay => 0.0,
        })
        .collect();
    let nodes = roles
        .iter()
        .enumerate()
        .map(|(id, &role)| Node {
            id,
            role,
            tier: 0,
            base_rate: rates[id],
        })
        .collect();
    let mut links = Vec::new();
    for b in 1..n {
        let a = rng.random_range(0..b);
        links.push(Link {
            a,
            b,
            rate: rng.random_range(1.0..5.0),
        });
    }
    for a in 0..n {
        for b in a + 1..n {
            if !links.iter().any(|l| l.a == a && l.b == b) && rng.random_bool(extra_edge_prob) {
                links.push(Link {
                    a,
                    b,
                    rate: rng.random_range(1.0..5.0),
                });
            }
        }
    }
    let topo = Topology::new(nodes, links).expect("random instance is valid");
    let mu = ServiceRates::new(rates.into_iter().map(|r| vec![r]).collect()).expect("rates are valid");
    (topo, mu)
}

pub fn random_tasks(rng: &mut impl Rng, topo: &Topology, max_tasks: usize, max_rate: f64) -> Vec<TaskSpec> {
    let clients = topo.clients();
    let mut sources: Vec<usize> = clients.clone();
    sources.truncate(max_tasks.max(1));
    sources
        .into_iter()
        .map(|source| TaskSpec {
            source,
            task_type: 0,
            rate: rng.random_range(0.1..max_rate),
            mode: TaskMode::Streaming,
        })
        .collect()
}

/// Links sharing an endpoint with `l`, counted directly from the edge list.
pub fn interface_degree(topo: &Topology, l: usize) -> usize {
    let me = &topo.links[l];
    topo.links
        .iter()
        .enumerate()
        .filter(|(k, o)| *k != l && (o.a == me.a || o.a == me.b || o.b == me.a || o.b == me.b))
        .count()
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { objective: f64, x: Vec<f64> },
    Infeasible,
}

const EPS: f64 = 1e-10;

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, obj: &mut [f64], r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r && row[c].abs() > 0.0 {
                let f = row[c];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        let f = obj[c];
        for (v, pv) in obj.iter_mut().zip(&pivot_row) {
            *v -= f * pv;
        }
        self.basis[r] = c;
    }

    /// Bland's rule until no improving column among `allowed`.
    fn optimize(&mut self, obj: &mut [f64], allowed: usize) {
        loop {
            let Some(c) = (0..allowed).find(|&j| obj[j] < -1e-9) else {
                return;
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c] > EPS {
                    let ratio = row[self.width] / row[c];
                    let better = match best {
                        None => true,
                        Some((bi, br)) => ratio < br - EPS || (ratio <= br + EPS && self.basis[i] < self.basis[bi]),
                    };
                    if better {
                        best = Some((i, ratio));
                    }
                }
            }
            let (r, _) = best.expect("costs are nonnegative, so the LP is bounded");
            self.pivot(obj, r, c);
        }
    }
}

/// Two-phase dense simplex: minimize `c.x` subject to `a_eq x = b_eq`,
/// `a_le x <= b_le`, `x >= 0`, with nonnegative right-hand sides.
pub fn simplex(c: &[f64], a_eq: &[Vec<f64>], b_eq: &[f64], a_le: &[Vec<f64>], b_le: &[f64]) -> LpOutcome {
    let n = c.len();
    let (m_eq, m_le) = (a_eq.len(), a_le.len());
    assert!(b_eq.iter().chain(b_le).all(|&b| b >= 0.0));
    let width = n + m_le + m_eq;
    let mut rows = Vec::with_capacity(m_eq + m_le);
    let mut basis = Vec::with_capacity(m_eq + m_le);
    for (i, (a, &b)) in a_le.iter().zip(b_le).enumerate() {
        let mut row = vec![0.0; width + 1];
        row[..n].copy_from_slice(a);
        row[n + i] = 1.0;
        row[width] = b;
        rows.push(row);
        basis.push(n + i);
    }
    for (i, (a, &b)) in a_eq.iter().zip(b_eq).enumerate() {
        let mut row = vec![0.0; width + 1];
        row[..n].copy_from_slice(a);
        row[n + m_le + i] = 1.0;
        row[width] = b;
        rows.push(row);
        basis.push(n + m_le + i);
    }
    let mut t = Tableau { rows, basis, width };

    // phase 1: minimize the sum of artificials
    let mut obj = vec![0.0; width + 1];
    for row in &t.rows[m_le..] {
        for j in 0..n + m_le {
            obj[j] -= row[j];
        }
        obj[width] -= row[width];
    }
    t.optimize(&mut obj, n + m_le);
    if -obj[width] > 1e-9 {
        return LpOutcome::Infeasible;
    }
    for r in 0..t.rows.len() {
        if t.basis[r] >= n + m_le {
            if let Some(c) = (0..n + m_le).find(|&j| t.rows[r][j].abs() > 1e-9) {
                t.pivot(&mut obj, r, c);
            }
        }
    }

    // phase 2
    let mut obj = vec![0.0; width + 1];
    obj[..n].copy_from_slice(c);
    for r in 0..t.rows.len() {
        let b = t.basis[r];
        let cb = if b < n { c[b] } else { 0.0 };
        if cb != 0.0 {
            let row = t.rows[r].clone();
            for (v, rv) in obj.iter_mut().zip(&row) {
                *v -= cb * rv;
            }
        }
    }
    t.optimize(&mut obj, n + m_le);
    let mut x = vec![0.0; n];
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rows[r][width];
        }
    }
    let objective = c.iter().zip(&x).map(|(c, x)| c * x).sum();
    LpOutcome::Optimal { objective, x }
}

/// The offloading LP written straight from the topology: per-task flows on
/// both directions of every link, per-task processing at every node, unit
/// costs `1/psi`, link capacity `r_e / max(interface degree, 1)` shared by
/// both directions, node capacity `mu_v`.
pub fn oracle_lp(topo: &Topology, mu: &ServiceRates, tasks: &[TaskSpec]) -> LpOutcome {
    let n = topo.n_nodes();
    let l = topo.n_links();
    let per_task = 2 * l + n;
    let n_vars = per_task * tasks.len();
    let link_cap: Vec<f64> = (0..l)
        .map(|e| topo.links[e].rate / interface_degree(topo, e).max(1) as f64)
        .collect();
    let node_cap: Vec<f64> = (0..n).map(|v| mu.get(v, 0)).collect();
    let f = |k: usize, e: usize, backward: bool| k * per_task + 2 * e + backward as usize;
    let g = |k: usize, v: usize| k * per_task + 2 * l + v;

    let mut c = vec![0.0; n_vars];
    for k in 0..tasks.len() {
        for e in 0..l {
            c[f(k, e, false)] = 1.0 / link_cap[e];
            c[f(k, e, true)] = 1.0 / link_cap[e];
        }
        for v in 0..n {
            c[g(k, v)] = if node_cap[v] > 0.0 { 1.0 / node_cap[v] } else { 0.0 };
        }
    }
    let (mut a_eq, mut b_eq) = (Vec::new(), Vec::new());
    for (k, task) in tasks.iter().enumerate() {
        for v in 0..n {
            let mut row = vec![0.0; n_vars];
            row[g(k, v)] = 1.0;
            for (e, link) in topo.links.iter().enumerate() {
                // forward arc goes a -> b
                if link.a == v {
                    row[f(k, e, false)] += 1.0;
                    row[f(k, e, true)] -= 1.0;
                }
                if link.b == v {
                    row[f(k, e, true)] += 1.0;
                    row[f(k, e, false)] -= 1.0;
                }
            }
            a_eq.push(row);
            b_eq.push(if v == task.source { task.rate } else { 0.0 });
        }
    }
    let (mut a_le, mut b_le) = (Vec::new(), Vec::new());
    for v in 0..n {
        let mut row = vec![0.0; n_vars];
        for k in 0..tasks.len() {
            row[g(k, v)] = 1.0;
        }
        a_le.push(row);
        b_le.push(node_cap[v]);
    }
    for e in 0..l {
        let mut row = vec![0.0; n_vars];
        for k in 0..tasks.len() {
            row[f(k, e, false)] = 1.0;
            row[f(k, e, true)] = 1.0;
        }
        a_le.push(row);
        b_le.push(link_cap[e]);
    }
    simplex(&c, &a_eq, &b_eq, &a_le, &b_le)
}
