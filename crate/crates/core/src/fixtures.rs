//! Small hand-built instances shared by tests, the acceptance suite and the
//! browser demo.

use crate::extended::ServiceRates;
use crate::netgraph::{Link, Node, NodeRole, Topology};

/// Client 0, relay 1, server 2 on a path; both links at rate 2; one task
/// type with service rates 1 (client) and 4 (server).
pub fn path3() -> (Topology, ServiceRates) {
    let nodes = vec![
        Node {
            id: 0,
            role: NodeRole::Client,
            tier: 3,
            base_rate: 1.0,
        },
        Node {
            id: 1,
            role: NodeRole::Relay,
            tier: 2,
            base_rate: 0.0,
        },
        Node {
            id: 2,
            role: NodeRole::Server,
            tier: 1,
            base_rate: 4.0,
        },
    ];
    let links = vec![
        Link { a: 0, b: 1, rate: 2.0 },
        Link { a: 1, b: 2, rate: 2.0 },
    ];
    let topo = Topology::new(nodes, links).expect("fixture is valid");
    let mu = ServiceRates::new(vec![vec![1.0], vec![0.0], vec![4.0]]).expect("fixture is valid");
    (topo, mu)
}
