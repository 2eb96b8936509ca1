//! Extended graph: the wireless topology plus one virtual sink per task type.
//!
//! Processing a type-`c` job at node `i` is modelled as sending it over the
//! directed virtual link `(i, sink_c)` whose rate is the service rate
//! `mu[i][c]`. Sinks get ids `n_physical + c`, so physical ids are stable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::{NodeId, NodeRole, Topology};

pub type TaskType = usize;

/// Per-node, per-type service rates (jobs/slot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRates {
    n_types: usize,
    /// `rates[node][type]`
    rates: Vec<Vec<f64>>,
}

impl ServiceRates {
    pub fn new(rates: Vec<Vec<f64>>) -> Result<Self> {
        let n_types = rates.first().map_or(0, Vec::len);
        if n_types == 0 {
            return Err(Error::InvalidParams("service rates need at least one type".into()));
        }
        for (v, row) in rates.iter().enumerate() {
            if row.len() != n_types {
                return Err(Error::InvalidParams(format!("node {v}: ragged rate row")));
            }
            if row.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
                return Err(Error::InvalidParams(format!("node {v}: negative service rate")));
            }
        }
        Ok(ServiceRates { n_types, rates })
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    pub fn n_nodes(&self) -> usize {
        self.rates.len()
    }

    pub fn get(&self, node: NodeId, c: TaskType) -> f64 {
        self.rates[node][c]
    }

    pub fn row(&self, node: NodeId) -> &[f64] {
        &self.rates[node]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rates
    }
}

/// How one task type's rates derive from the base per-node rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeScaling {
    pub factor: f64,
    /// Zero the rate on every node that is not a server.
    #[serde(default)]
    pub servers_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateScheme {
    pub types: Vec<TypeScaling>,
}

impl RateScheme {
    /// Type 0 at 0.6 of base everywhere, type 1 at full base rate on servers only.
    pub fn two_type() -> Self {
        RateScheme {
            types: vec![
                TypeScaling {
                    factor: 0.6,
                    servers_only: false,
                },
                TypeScaling {
                    factor: 1.0,
                    servers_only: true,
                },
            ],
        }
    }

    pub fn single_type() -> Self {
        RateScheme {
            types: vec![TypeScaling {
                factor: 0.125,
                servers_only: false,
            }],
        }
    }

    pub fn n_types(&self) -> usize {
        self.types.len()
    }
}

pub fn derive_typed_service_rates(topo: &Topology, scheme: &RateScheme) -> Result<ServiceRates> {
    if scheme.types.iter().any(|t| !(t.factor >= 0.0 && t.factor.is_finite())) {
        return Err(Error::InvalidParams("scaling factors must be non-negative".into()));
    }
    let rates = topo
        .nodes
        .iter()
        .map(|node| {
            scheme
                .types
                .iter()
                .map(|t| match node.role {
                    NodeRole::Relay => 0.0,
                    NodeRole::Client if t.servers_only => 0.0,
                    _ => node.base_rate * t.factor,
                })
                .collect()
        })
        .collect();
    ServiceRates::new(rates)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualLink {
    pub node: NodeId,
    pub task_type: TaskType,
    pub rate: f64,
}

/// Directed edge of the extended graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedEdge {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedGraph {
    base: Topology,
    n_types: usize,
    virtual_links: Vec<VirtualLink>,
}

impl ExtendedGraph {
    pub fn base(&self) -> &Topology {
        &self.base
    }

    pub fn n_physical(&self) -> usize {
        self.base.n_nodes()
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    pub fn n_vertices(&self) -> usize {
        self.base.n_nodes() + self.n_types
    }

    pub fn sink(&self, c: TaskType) -> usize {
        self.base.n_nodes() + c
    }

    pub fn virtual_links(&self) -> &[VirtualLink] {
        &self.virtual_links
    }

    /// Undirected wireless links first (one entry each, `a -> b`), then
    /// virtual links. This is the population the sigma normalization
    /// averages over.
    pub fn rate_population(&self) -> impl Iterator<Item = f64> + '_ {
        self.base
            .links
            .iter()
            .map(|l| l.rate)
            .chain(self.virtual_links.iter().map(|v| v.rate))
    }

    /// Every directed edge: both directions of each wireless link, then the
    /// virtual links.
    pub fn directed_edges(&self) -> Vec<ExtendedEdge> {
        let mut out = Vec::with_capacity(2 * self.base.n_links() + self.virtual_links.len());
        for l in &self.base.links {
            out.push(ExtendedEdge {
                from: l.a,
                to: l.b,
                rate: l.rate,
            });
            out.push(ExtendedEdge {
                from: l.b,
                to: l.a,
                rate: l.rate,
            });
        }
        for v in &self.virtual_links {
            out.push(ExtendedEdge {
                from: v.node,
                to: self.sink(v.task_type),
                rate: v.rate,
            });
        }
        out
    }
}

pub fn build_extended_graph(topo: &Topology, mu: &ServiceRates, n_types: usize) -> Result<ExtendedGraph> {
    if n_types == 0 || mu.n_types() != n_types || mu.n_nodes() != topo.n_nodes() {
        return Err(Error::Mismatch(format!(
            "service rates are {}x{}, topology has {} nodes and {n_types} types",
            mu.n_nodes(),
            mu.n_types(),
            topo.n_nodes()
        )));
    }
    let mut virtual_links = Vec::new();
    for node in &topo.nodes {
        for c in 0..n_types {
            let rate = mu.get(node.id, c);
            if node.role == NodeRole::Relay {
                if rate != 0.0 {
                    return Err(Error::InvalidParams(format!("relay {} has service rate", node.id)));
                }
                continue;
            }
            if rate > 0.0 {
                virtual_links.push(VirtualLink {
                    node: node.id,
                    task_type: c,
                    rate,
                });
            }
        }
    }
    for c in 0..n_types {
        if !virtual_links.iter().any(|v| v.task_type == c) {
            return Err(Error::NoCapableNode(c));
        }
    }
    virtual_links.sort_by_key(|v| (v.task_type, v.node));
    Ok(ExtendedGraph {
        base: topo.clone(),
        n_types,
        virtual_links,
    })
}
