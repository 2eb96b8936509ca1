//! Browser demo: generate a network, inspect its bias map, and compare the
//! three SP-BP schemes on it. Every export takes and returns JSON strings so
//! the page needs no bindings beyond `wasm-bindgen`'s string passing.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use vsink_core::engine::{run_instance, Scenario};
use vsink_core::experiment::{instance_from_files, ExperimentSpec, NetworkFile};
use vsink_core::extended::build_extended_graph;
use vsink_core::metrics::median;
use vsink_core::spbp::compute_bias_table;
use vsink_core::{Error, Scheme};

/// Demo networks stay small enough to simulate in a frame or two.
const MIN_NODES: usize = 15;
const MAX_NODES: usize = 150;

#[derive(Debug, Clone, Deserialize)]
pub struct DemoParams {
    pub seed: u32,
    pub nodes: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SimParams {
    pub seed: u32,
    pub nodes: usize,
    pub scheme: Scheme,
    pub load: f64,
    pub horizon: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasMap {
    pub task_type: usize,
    /// Shortest-path distance from each node to the type's virtual sink.
    pub bias: Vec<f64>,
    pub rbar: f64,
    pub rmax: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub scheme: Scheme,
    pub load: f64,
    pub jobs: usize,
    pub completed: usize,
    pub median_makespan: Option<f64>,
    pub median_hops: Option<f64>,
    /// Jobs in the system after each slot.
    pub backlog: Vec<u64>,
    /// Completed jobs per node.
    pub processed: Vec<usize>,
}

fn spec(seed: u32, nodes: usize) -> Result<ExperimentSpec, String> {
    if !(MIN_NODES..=MAX_NODES).contains(&nodes) {
        return Err(format!("nodes must be between {MIN_NODES} and {MAX_NODES}"));
    }
    let mut spec = ExperimentSpec {
        master_seed: seed as u64,
        n_networks: 1,
        n_traffic_instances: 1,
        scenario: Scenario::TwoType,
        ..ExperimentSpec::default()
    };
    spec.network.total_nodes = nodes;
    // keep at least a handful of clients on small networks
    spec.network.k_choices.retain(|&k| (1 + spec.network.tier2_per_core) * k + 5 <= nodes);
    if spec.network.k_choices.is_empty() {
        spec.network.k_choices = vec![1];
    }
    Ok(spec)
}

fn network(seed: u32, nodes: usize) -> Result<(ExperimentSpec, NetworkFile), String> {
    let spec = spec(seed, nodes)?;
    let net = spec.network_file(0).map_err(|e| e.to_string())?;
    Ok((spec, net))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn parse<'a, T: Deserialize<'a>>(json: &'a str) -> Result<T, String> {
    serde_json::from_str(json).map_err(|e| format!("bad request: {e}"))
}

/// `{"seed", "nodes"}` -> network file JSON (topology and service rates).
pub fn generate_network_json(request: &str) -> Result<String, String> {
    let p: DemoParams = parse(request)?;
    to_json(&network(p.seed, p.nodes)?.1)
}

/// `{"seed", "nodes"}` plus a task type -> per-node bias to that type's sink.
pub fn bias_map_json(request: &str, task_type: usize) -> Result<String, String> {
    let p: DemoParams = parse(request)?;
    let (_, net) = network(p.seed, p.nodes)?;
    let n_types = net.service_rates.n_types();
    if task_type >= n_types {
        return Err(format!("task type must be below {n_types}"));
    }
    let eg = build_extended_graph(&net.topology, &net.service_rates, n_types).map_err(|e| e.to_string())?;
    let table = compute_bias_table(&eg).map_err(|e| e.to_string())?;
    to_json(&BiasMap {
        task_type,
        bias: (0..net.topology.n_nodes()).map(|v| table.to_sink(v, task_type)).collect(),
        rbar: table.rbar,
        rmax: table.rmax,
    })
}

/// `{"seed", "nodes", "scheme", "load", "horizon"}` -> run report.
pub fn simulate_json(request: &str) -> Result<String, String> {
    let p: SimParams = parse(request)?;
    if p.horizon == 0 || p.horizon > 2000 {
        return Err("horizon must be between 1 and 2000".into());
    }
    let (mut spec, net) = network(p.seed, p.nodes)?;
    spec.horizon = p.horizon;
    let tasks = spec.task_file(&net, 0, 0).map_err(|e| e.to_string())?;
    let instance = instance_from_files(&net, &tasks).map_err(|e| e.to_string())?;
    let cfg = spec.sim_config(p.scheme, p.load, tasks.seed);
    let out = run_instance(&instance, &cfg).map_err(|e| match e {
        Error::MultiType => "joint_lp needs the single-type scenario; the demo runs two types".to_owned(),
        e => e.to_string(),
    })?;
    let done: Vec<_> = out.records.iter().filter(|r| !r.censored).collect();
    let makespans: Vec<f64> = done.iter().filter_map(|r| r.makespan()).collect();
    let hops: Vec<f64> = done.iter().map(|r| r.hops as f64).collect();
    let mut processed = vec![0; net.topology.n_nodes()];
    for r in &done {
        if let Some(v) = r.processed_at {
            processed[v] += 1;
        }
    }
    to_json(&SimReport {
        scheme: p.scheme,
        load: p.load,
        jobs: out.records.len(),
        completed: done.len(),
        median_makespan: median(&makespans),
        median_hops: median(&hops),
        backlog: out.backlog,
        processed,
    })
}

fn js(result: Result<String, String>) -> Result<String, JsValue> {
    result.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn generate_network(request: &str) -> Result<String, JsValue> {
    js(generate_network_json(request))
}

#[wasm_bindgen]
pub fn bias_map(request: &str, task_type: usize) -> Result<String, JsValue> {
    js(bias_map_json(request, task_type))
}

#[wasm_bindgen]
pub fn simulate(request: &str) -> Result<String, JsValue> {
    js(simulate_json(request))
}
