//! Connectivity graph, conflict graph and the three-tier topology generator.

use std::collections::{BTreeSet, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use rand_distr::Pareto;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

pub type NodeId = usize;
pub type LinkId = usize;

/// Resampling cap for disconnected topology draws.
pub const MAX_TOPOLOGY_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Client,
    Relay,
    Server,
}

impl NodeRole {
    pub fn can_compute(self) -> bool {
        !matches!(self, NodeRole::Relay)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub role: NodeRole,
    /// 1 = core, 2 = edge tier, 3 = clients. Hand-built graphs use 0.
    #[serde(default)]
    pub tier: u8,
    /// Base service rate before per-type scaling (jobs/slot).
    pub base_rate: f64,
}

/// Undirected wireless link with its long-term rate. `a < b` always.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub rate: f64,
}

impl Link {
    pub fn other(&self, v: NodeId) -> NodeId {
        if v == self.a {
            self.b
        } else {
            self.a
        }
    }

    pub fn touches(&self, v: NodeId) -> bool {
        self.a == v || self.b == v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
}

impl Topology {
    /// Builds a topology from parts and checks every structural invariant.
    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Result<Self> {
        let topo = Topology { nodes, links };
        topo.validate()?;
        Ok(topo)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::InvalidParams(format!("node {i} carries id {}", n.id)));
            }
            if !(n.base_rate >= 0.0 && n.base_rate.is_finite()) {
                return Err(Error::InvalidParams(format!("node {i}: bad base rate")));
            }
            if n.role == NodeRole::Relay && n.base_rate != 0.0 {
                return Err(Error::InvalidParams(format!("relay {i} has nonzero service rate")));
            }
        }
        let mut seen = BTreeSet::new();
        for (l, link) in self.links.iter().enumerate() {
            if link.a >= link.b || link.b >= self.nodes.len() {
                return Err(Error::InvalidParams(format!("link {l} has bad endpoints")));
            }
            if !seen.insert((link.a, link.b)) {
                return Err(Error::InvalidParams(format!("link {l} duplicated")));
            }
            if !(link.rate > 0.0 && link.rate.is_finite()) {
                return Err(Error::InvalidParams(format!("link {l} has non-positive rate")));
            }
        }
        if !self.is_connected() {
            return Err(Error::InvalidParams("topology is disconnected".into()));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    /// `adj[v]` lists `(neighbor, link)` in link-id order.
    pub fn adjacency(&self) -> Vec<Vec<(NodeId, LinkId)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (l, link) in self.links.iter().enumerate() {
            adj[link.a].push((link.b, l));
            adj[link.b].push((link.a, l));
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        if n == 0 {
            return false;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &(u, _) in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        count == n
    }

    pub fn ids_with_role(&self, role: NodeRole) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.role == role)
            .map(|n| n.id)
            .collect()
    }

    pub fn clients(&self) -> Vec<NodeId> {
        self.ids_with_role(NodeRole::Client)
    }

    pub fn servers(&self) -> Vec<NodeId> {
        self.ids_with_role(NodeRole::Server)
    }

    pub fn link_between(&self, u: NodeId, v: NodeId) -> Option<LinkId> {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        self.links.iter().position(|l| l.a == a && l.b == b)
    }
}

/// Conflict graph over undirected link ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictGraph {
    pub n_links: usize,
    /// Sorted unordered pairs `(e1, e2)` with `e1 < e2`.
    pub conflicts: Vec<(LinkId, LinkId)>,
    #[serde(skip)]
    neighbors: Vec<Vec<LinkId>>,
}

impl ConflictGraph {
    /// Arbitrary conflict graph; pairs are normalized and deduplicated.
    pub fn from_pairs(n_links: usize, pairs: impl IntoIterator<Item = (LinkId, LinkId)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (x, y) in pairs {
            if x == y {
                return Err(Error::InvalidParams(format!("self-conflict on link {x}")));
            }
            if x >= n_links || y >= n_links {
                return Err(Error::InvalidParams(format!("conflict ({x},{y}) out of range")));
            }
            set.insert((x.min(y), x.max(y)));
        }
        let conflicts: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n_links];
        for &(x, y) in &conflicts {
            neighbors[x].push(y);
            neighbors[y].push(x);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Ok(ConflictGraph {
            n_links,
            conflicts,
            neighbors,
        })
    }

    pub fn neighbors(&self, e: LinkId) -> &[LinkId] {
        &self.neighbors[e]
    }

    pub fn degree(&self, e: LinkId) -> usize {
        self.neighbors[e].len()
    }

    pub fn conflict(&self, x: LinkId, y: LinkId) -> bool {
        self.neighbors[x].binary_search(&y).is_ok()
    }

    /// Rebuilds the adjacency after deserialization.
    pub fn reindex(self) -> Result<Self> {
        ConflictGraph::from_pairs(self.n_links, self.conflicts)
    }
}

/// Line graph of the connectivity graph: links conflict iff they share an endpoint.
pub fn build_conflict_graph(topo: &Topology) -> ConflictGraph {
    let adj = topo.adjacency();
    let pairs = adj.iter().flat_map(|incident| {
        incident.iter().enumerate().flat_map(move |(i, &(_, x))| {
            incident[i + 1..].iter().map(move |&(_, y)| (x, y))
        })
    });
    ConflictGraph::from_pairs(topo.n_links(), pairs).expect("line graph pairs are well formed")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub k_choices: Vec<usize>,
    pub tier2_per_core: usize,
    pub edge_server_frac: f64,
    pub intra_group_edge_prob: f64,
    pub second_link_prob: f64,
    pub total_nodes: usize,
    pub pareto_shape: f64,
    pub pareto_scale: f64,
    pub client_mu_range: (f64, f64),
    /// Attachment weight of one edge server relative to `core_attach_weight`.
    pub edge_attach_weight: f64,
    pub core_attach_weight: f64,
    pub rate_range: (f64, f64),
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            k_choices: vec![3, 4, 5, 6],
            tier2_per_core: 4,
            edge_server_frac: 0.8,
            intra_group_edge_prob: 0.7,
            second_link_prob: 0.1,
            total_nodes: 100,
            pareto_shape: 2.0,
            pareto_scale: 8.0,
            client_mu_range: (8.0, 12.0),
            edge_attach_weight: 10.0,
            core_attach_weight: 1.0,
            rate_range: (10.0, 20.0),
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name}={p} not in [0,1]")))
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        let max_k = *self
            .k_choices
            .iter()
            .max()
            .ok_or_else(|| Error::InvalidParams("k_choices is empty".into()))?;
        if self.k_choices.contains(&0) {
            return Err(Error::InvalidParams("k must be at least 1".into()));
        }
        check_prob("edge_server_frac", self.edge_server_frac)?;
        check_prob("intra_group_edge_prob", self.intra_group_edge_prob)?;
        check_prob("second_link_prob", self.second_link_prob)?;
        if self.total_nodes < (1 + self.tier2_per_core) * max_k {
            return Err(Error::InvalidParams(format!(
                "total_nodes={} below {} servers and relays for k={max_k}",
                self.total_nodes,
                (1 + self.tier2_per_core) * max_k
            )));
        }
        if !(self.pareto_shape > 0.0 && self.pareto_scale > 0.0) {
            return Err(Error::InvalidParams("pareto parameters must be positive".into()));
        }
        let (lo, hi) = self.client_mu_range;
        if !(lo >= 0.0 && hi >= lo) {
            return Err(Error::InvalidParams("bad client_mu_range".into()));
        }
        if !(self.edge_attach_weight >= 0.0 && self.core_attach_weight >= 0.0)
            || self.edge_attach_weight + self.core_attach_weight <= 0.0
        {
            return Err(Error::InvalidParams("bad attachment weights".into()));
        }
        check_rate_range(self.rate_range)
    }
}

fn check_rate_range((lo, hi): (f64, f64)) -> Result<()> {
    if lo > 0.0 && hi >= lo && hi.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("rate range [{lo},{hi}] must be positive")))
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Draws a three-tier topology: a core clique, edge groups hanging off each
/// core server, and clients attached to one or two servers.
pub fn generate_topology(seed: u64, params: &GenParams) -> Result<Topology> {
    params.validate()?;
    for attempt in 0..MAX_TOPOLOGY_RETRIES {
        let mut rng = rng::substream(seed, &[tag::TOPOLOGY, attempt as u64]);
        let topo = sample_tiers(&mut rng, params);
        if topo.is_connected() {
            return sample_long_term_rates(seed, &topo, params.rate_range);
        }
    }
    Err(Error::RetriesExhausted(MAX_TOPOLOGY_RETRIES))
}

fn sample_tiers(rng: &mut impl Rng, params: &GenParams) -> Topology {
    let k = params.k_choices[rng.random_range(0..params.k_choices.len())];
    let t2 = params.tier2_per_core;
    let mut nodes: Vec<Node> = Vec::with_capacity(params.total_nodes);
    let mut edges: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let add_node = |nodes: &mut Vec<Node>, role, tier| {
        let id = nodes.len();
        nodes.push(Node {
            id,
            role,
            tier,
            base_rate: 0.0,
        });
        id
    };

    let cores: Vec<NodeId> = (0..k).map(|_| add_node(&mut nodes, NodeRole::Server, 1)).collect();
    for (i, &x) in cores.iter().enumerate() {
        for &y in &cores[i + 1..] {
            edges.insert((x, y));
        }
    }

    let n_tier2 = t2 * k;
    let n_relays = ((1.0 - params.edge_server_frac) * n_tier2 as f64).round_ties_even() as usize;
    let relay_slots: BTreeSet<usize> = index::sample(rng, n_tier2, n_relays.min(n_tier2)).into_iter().collect();
    for &core in &cores {
        let group: Vec<NodeId> = (0..t2)
            .map(|_| {
                let slot = nodes.len() - k;
                let role = if relay_slots.contains(&slot) {
                    NodeRole::Relay
                } else {
                    NodeRole::Server
                };
                add_node(&mut nodes, role, 2)
            })
            .collect();
        for (i, &x) in group.iter().enumerate() {
            edges.insert((core, x));
            for &y in &group[i + 1..] {
                if rng.random_bool(params.intra_group_edge_prob) {
                    edges.insert((x, y));
                }
            }
        }
    }

    let servers: Vec<NodeId> = nodes
        .iter()
        .filter(|n| n.role == NodeRole::Server)
        .map(|n| n.id)
        .collect();
    let weights: Vec<f64> = servers
        .iter()
        .map(|&s| {
            if nodes[s].tier == 1 {
                params.core_attach_weight
            } else {
                params.edge_attach_weight
            }
        })
        .collect();
    let n_clients = params.total_nodes - k - n_tier2;
    let attach = WeightedIndex::new(&weights).ok();
    for _ in 0..n_clients {
        let c = add_node(&mut nodes, NodeRole::Client, 3);
        let Some(attach) = &attach else { continue };
        let first = servers[attach.sample(rng)];
        edges.insert((first, c));
        if servers.len() > 1 && rng.random_bool(params.second_link_prob) {
            let mut w = weights.clone();
            w[servers.iter().position(|&s| s == first).unwrap()] = 0.0;
            if let Ok(second) = WeightedIndex::new(&w) {
                edges.insert((servers[second.sample(rng)], c));
            }
        }
    }

    // s-th largest Pareto draw goes to the s-th inserted server
    let pareto = Pareto::new(params.pareto_scale, params.pareto_shape).expect("validated");
    let mut draws: Vec<f64> = (0..servers.len()).map(|_| pareto.sample(rng)).collect();
    draws.sort_by(|a, b| b.total_cmp(a));
    for (&s, mu) in servers.iter().zip(draws) {
        nodes[s].base_rate = mu;
    }
    for node in nodes.iter_mut().filter(|n| n.role == NodeRole::Client) {
        node.base_rate = uniform(rng, params.client_mu_range);
    }

    let links = edges
        .into_iter()
        .map(|(a, b)| Link { a, b, rate: 1.0 })
        .collect();
    Topology { nodes, links }
}

/// Assigns each undirected link a long-term rate drawn uniformly from `range`.
pub fn sample_long_term_rates(seed: u64, topo: &Topology, range: (f64, f64)) -> Result<Topology> {
    check_rate_range(range)?;
    let mut rng = rng::substream(seed, &[tag::LINK_RATES]);
    let mut out = topo.clone();
    for link in &mut out.links {
        link.rate = uniform(&mut rng, range);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Topology {
        let nodes = (0..n)
            .map(|id| Node {
                id,
                role: NodeRole::Server,
                tier: 0,
                base_rate: 1.0,
            })
            .collect();
        let links = (0..n - 1)
            .map(|a| Link {
                a,
                b: a + 1,
                rate: 2.0,
            })
            .collect();
        Topology::new(nodes, links).unwrap()
    }

    fn star(leaves: usize) -> Topology {
        let nodes = (0..=leaves)
            .map(|id| Node {
                id,
                role: NodeRole::Server,
                tier: 0,
                base_rate: 1.0,
            })
            .collect();
        let links = (1..=leaves).map(|b| Link { a: 0, b, rate: 1.0 }).collect();
        Topology::new(nodes, links).unwrap()
    }

    #[test]
    fn default_instance_has_expected_roles() {
        for seed in 0..20 {
            let topo = generate_topology(seed, &GenParams::default()).unwrap();
            assert_eq!(topo.n_nodes(), 100);
            let cores = topo.nodes.iter().filter(|n| n.tier == 1).count();
            let tier2 = topo.nodes.iter().filter(|n| n.tier == 2).count();
            let clients = topo.clients().len();
            assert!((3..=6).contains(&cores));
            assert_eq!(tier2, 4 * cores);
            assert_eq!(clients, 100 - 5 * cores);
            let relays = topo.ids_with_role(NodeRole::Relay).len();
            assert_eq!(relays, (0.8 * cores as f64).round() as usize);
            assert!(topo.is_connected());
        }
    }

    #[test]
    fn k4_yields_80_clients() {
        let params = GenParams {
            k_choices: vec![4],
            ..GenParams::default()
        };
        let topo = generate_topology(3, &params).unwrap();
        assert_eq!(topo.nodes.iter().filter(|n| n.tier == 1).count(), 4);
        assert_eq!(topo.nodes.iter().filter(|n| n.tier == 2).count(), 16);
        assert_eq!(topo.clients().len(), 80);
    }

    #[test]
    fn smallest_instance() {
        let params = GenParams {
            k_choices: vec![1],
            tier2_per_core: 0,
            total_nodes: 2,
            ..GenParams::default()
        };
        let topo = generate_topology(11, &params).unwrap();
        assert_eq!(topo.servers(), vec![0]);
        assert_eq!(topo.clients(), vec![1]);
        assert_eq!(topo.n_links(), 1);
    }

    #[test]
    fn generation_is_deterministic() {
        let p = GenParams::default();
        let a = serde_json::to_string(&generate_topology(7, &p).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_topology(7, &p).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn server_rates_follow_insertion_rank() {
        let topo = generate_topology(5, &GenParams::default()).unwrap();
        let rates: Vec<f64> = topo.servers().iter().map(|&s| topo.nodes[s].base_rate).collect();
        assert!(rates.windows(2).all(|w| w[0] >= w[1]));
        assert!(rates.iter().all(|&r| r >= 8.0));
        for c in topo.clients() {
            let mu = topo.nodes[c].base_rate;
            assert!((8.0..12.0).contains(&mu));
        }
    }

    #[test]
    fn rejects_bad_params() {
        let bad = GenParams {
            intra_group_edge_prob: 1.5,
            ..GenParams::default()
        };
        assert!(generate_topology(0, &bad).is_err());
        let small = GenParams {
            total_nodes: 20,
            ..GenParams::default()
        };
        assert!(generate_topology(0, &small).is_err());
    }

    #[test]
    fn conflict_graph_of_path() {
        let cg = build_conflict_graph(&line(3));
        assert_eq!(cg.n_links, 2);
        assert_eq!(cg.conflicts, vec![(0, 1)]);
    }

    #[test]
    fn conflict_graph_of_single_edge() {
        let cg = build_conflict_graph(&line(2));
        assert_eq!(cg.n_links, 1);
        assert!(cg.conflicts.is_empty());
    }

    #[test]
    fn star_conflicts_are_complete() {
        let topo = star(4);
        let cg = build_conflict_graph(&topo);
        // brute force: every pair sharing an endpoint
        let mut expected = Vec::new();
        for x in 0..topo.n_links() {
            for y in x + 1..topo.n_links() {
                let (lx, ly) = (&topo.links[x], &topo.links[y]);
                if lx.touches(ly.a) || lx.touches(ly.b) {
                    expected.push((x, y));
                }
            }
        }
        assert_eq!(expected.len(), 6);
        assert_eq!(cg.conflicts, expected);
    }

    #[test]
    fn generated_conflicts_are_line_graph() {
        let topo = generate_topology(2, &GenParams::default()).unwrap();
        let cg = build_conflict_graph(&topo);
        for x in 0..topo.n_links() {
            for y in x + 1..topo.n_links() {
                let (lx, ly) = (&topo.links[x], &topo.links[y]);
                let share = lx.touches(ly.a) || lx.touches(ly.b);
                assert_eq!(share, cg.conflict(x, y), "links {x},{y}");
            }
        }
    }

    #[test]
    fn link_rates() {
        let topo = line(4);
        let fixed = sample_long_term_rates(1, &topo, (5.0, 5.0)).unwrap();
        assert!(fixed.links.iter().all(|l| l.rate == 5.0));
        let drawn = sample_long_term_rates(1, &topo, (10.0, 20.0)).unwrap();
        assert!(drawn.links.iter().all(|l| (10.0..=20.0).contains(&l.rate)));
        assert_eq!(drawn, sample_long_term_rates(1, &topo, (10.0, 20.0)).unwrap());
        assert!(sample_long_term_rates(1, &topo, (0.0, 2.0)).is_err());
        assert!(sample_long_term_rates(1, &topo, (-3.0, -1.0)).is_err());
    }

    #[test]
    fn topology_json_round_trip() {
        let topo = generate_topology(9, &GenParams::default()).unwrap();
        let text = serde_json::to_string_pretty(&topo).unwrap();
        let back: Topology = serde_json::from_str(&text).unwrap();
        assert_eq!(topo, back);
    }
}
