//! Instance files, experiment specs and the (network x traffic x scheme x
//! load) sweep.
//!
//! Every cell's randomness comes from `(master_seed, cell key)`, so cells can
//! run in any order on any number of threads. Each finished cell is written
//! to its own file; a rerun of an interrupted sweep picks those up instead of
//! simulating again.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::Scheme;
use crate::engine::{run_instance, FadingParams, Instance, RunOutput, Scenario, SimConfig};
use crate::error::{Error, Result};
use crate::extended::{derive_typed_service_rates, ServiceRates};
use crate::metrics::{read_records_file, write_records_file, write_summary_file, Population, SummaryBuilder, SummaryRow};
use crate::netgraph::{generate_topology, GenParams, Topology};
use crate::rng::{derive_seed, tag};
use crate::traffic::{generate_tasks, validate_tasks, TaskGenParams, TaskSpec};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub master_seed: u64,
    pub n_networks: usize,
    pub n_traffic_instances: usize,
    pub loads: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub scenario: Scenario,
    pub horizon: u32,
    pub processors: usize,
    pub fading: FadingParams,
    pub network: GenParams,
    pub traffic: TaskGenParams,
    pub population: Population,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            master_seed: 1,
            n_networks: 10,
            n_traffic_instances: 10,
            loads: vec![0.5, 1.0, 1.5, 2.0, 2.5],
            schemes: vec![Scheme::JointSpbp, Scheme::SpbpSpbp, Scheme::BpSpbp],
            scenario: Scenario::TwoType,
            horizon: 1000,
            processors: crate::compute::DEFAULT_PROCESSORS,
            fading: FadingParams::default(),
            network: GenParams::default(),
            traffic: TaskGenParams::default(),
            population: Population::Job,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_networks == 0 || self.n_traffic_instances == 0 {
            return Err(Error::InvalidParams("need at least one network and one traffic instance".into()));
        }
        if self.loads.is_empty() || self.loads.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParams("loads must be a non-empty list of positive numbers".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidParams("no schemes selected".into()));
        }
        if self.scenario.n_types() > 1 && self.schemes.contains(&Scheme::JointLp) {
            return Err(Error::MultiType);
        }
        self.network.validate()?;
        self.sim_config(self.schemes[0], self.loads[0], 0).validate()
    }

    pub fn from_toml(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn network_seed(&self, net: usize) -> u64 {
        derive_seed(self.master_seed, &[tag::NETWORK, net as u64])
    }

    pub fn traffic_seed(&self, net: usize, traffic: usize) -> u64 {
        derive_seed(self.master_seed, &[tag::TRAFFIC, net as u64, traffic as u64])
    }

    /// Task parameters with burst windows placed inside this horizon.
    pub fn task_params(&self) -> TaskGenParams {
        TaskGenParams {
            horizon: self.horizon,
            allow_bursty: self.traffic.allow_bursty && self.scenario.allows_bursty(),
            ..self.traffic.clone()
        }
    }

    pub fn sim_config(&self, scheme: Scheme, load: f64, seed: u64) -> SimConfig {
        SimConfig {
            horizon: self.horizon,
            scheme,
            load,
            seed,
            processors: self.processors,
            fading: self.fading,
            trace: false,
        }
    }

    pub fn network_file(&self, net: usize) -> Result<NetworkFile> {
        let seed = self.network_seed(net);
        let topology = generate_topology(seed, &self.network)?;
        let service_rates = derive_typed_service_rates(&topology, &self.scenario.rate_scheme())?;
        Ok(NetworkFile {
            version: FORMAT_VERSION,
            seed,
            scenario: self.scenario,
            params: self.network.clone(),
            topology,
            service_rates,
        })
    }

    pub fn task_file(&self, network: &NetworkFile, net: usize, traffic: usize) -> Result<TaskFile> {
        let seed = self.traffic_seed(net, traffic);
        let params = self.task_params();
        let tasks = generate_tasks(seed, &network.topology, self.scenario.n_types(), 1.0, &params)?;
        Ok(TaskFile {
            version: FORMAT_VERSION,
            seed,
            network_seed: network.seed,
            params,
            tasks,
        })
    }

    /// All cells in canonical order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut cells = Vec::new();
        for net in 0..self.n_networks {
            for traffic in 0..self.n_traffic_instances {
                for &scheme in &self.schemes {
                    for &load in &self.loads {
                        cells.push(CellKey {
                            net,
                            traffic,
                            scheme,
                            load,
                        });
                    }
                }
            }
        }
        cells
    }
}

/// A generated network with its per-type service rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub version: u32,
    pub seed: u64,
    pub scenario: Scenario,
    pub params: GenParams,
    pub topology: Topology,
    pub service_rates: ServiceRates,
}

/// Unit-load tasks for one network; runs scale rates by the load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFile {
    pub version: u32,
    /// Also seeds arrivals, fading and policy draws of runs on this file.
    pub seed: u64,
    pub network_seed: u64,
    pub params: TaskGenParams,
    pub tasks: Vec<TaskSpec>,
}

pub fn instance_from_files(network: &NetworkFile, tasks: &TaskFile) -> Result<Instance> {
    if tasks.network_seed != network.seed {
        return Err(Error::Mismatch(format!(
            "task file was generated for network seed {}, not {}",
            tasks.network_seed, network.seed
        )));
    }
    validate_tasks(&network.topology, network.service_rates.n_types(), &tasks.tasks)?;
    Ok(Instance {
        topology: network.topology.clone(),
        service_rates: network.service_rates.clone(),
        tasks: tasks.tasks.clone(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn network_path(out: &Path, net: usize) -> PathBuf {
    out.join("networks").join(format!("network_{net:03}.json"))
}

pub fn tasks_path(out: &Path, net: usize, traffic: usize) -> PathBuf {
    out.join("tasks").join(format!("tasks_{net:03}_{traffic:03}.json"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub tool: String,
    pub command: String,
    pub spec: ExperimentSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub infeasible: Vec<CellKey>,
}

impl Manifest {
    pub fn new(command: &str, spec: &ExperimentSpec) -> Self {
        Manifest {
            version: FORMAT_VERSION,
            tool: concat!("vsink ", env!("CARGO_PKG_VERSION")).to_owned(),
            command: command.to_owned(),
            spec: spec.clone(),
            infeasible: Vec::new(),
        }
    }
}

/// Writes every network and task file of the spec plus a manifest.
pub fn generate(spec: &ExperimentSpec, out: &Path) -> Result<Vec<PathBuf>> {
    spec.validate()?;
    create_dir(&out.join("networks"))?;
    create_dir(&out.join("tasks"))?;
    let mut written = Vec::new();
    for net in 0..spec.n_networks {
        let network = spec.network_file(net)?;
        let path = network_path(out, net);
        write_json(&path, &network)?;
        written.push(path);
        for traffic in 0..spec.n_traffic_instances {
            let path = tasks_path(out, net, traffic);
            write_json(&path, &spec.task_file(&network, net, traffic)?)?;
            written.push(path);
        }
    }
    let path = out.join("manifest.json");
    write_json(&path, &Manifest::new("generate", spec))?;
    written.push(path);
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub net: usize,
    pub traffic: usize,
    pub scheme: Scheme,
    pub load: f64,
}

impl CellKey {
    pub fn stem(&self) -> String {
        format!("n{:03}_t{:03}_{}_l{}", self.net, self.traffic, self.scheme, self.load)
    }

    pub fn results_path(&self, out: &Path) -> PathBuf {
        out.join("cells").join(format!("{}.csv", self.stem()))
    }

    pub fn infeasible_path(&self, out: &Path) -> PathBuf {
        out.join("cells").join(format!("{}.infeasible", self.stem()))
    }
}

/// Runs one cell. `Ok(None)` means the LP had no feasible solution.
pub fn run_cell(spec: &ExperimentSpec, instance: &Instance, key: &CellKey) -> Result<Option<RunOutput>> {
    let cfg = spec.sim_config(key.scheme, key.load, spec.traffic_seed(key.net, key.traffic));
    match run_instance(instance, &cfg) {
        Ok(out) => Ok(Some(out)),
        Err(Error::LpInfeasible { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub summary: Vec<SummaryRow>,
    pub ran: usize,
    pub reused: usize,
    pub infeasible: Vec<CellKey>,
}

fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Runs (or reuses) every cell, then writes `summary.csv` and
/// `manifest.json` under `out`. `threads = None` uses all cores.
pub fn sweep(spec: &ExperimentSpec, out: &Path, threads: Option<usize>) -> Result<SweepReport> {
    spec.validate()?;
    create_dir(&out.join("cells"))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;

    let pairs: Vec<(usize, usize)> = (0..spec.n_networks)
        .flat_map(|n| (0..spec.n_traffic_instances).map(move |t| (n, t)))
        .collect();
    let instances: Vec<Instance> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(net, traffic)| {
                let network = spec.network_file(net)?;
                let tasks = spec.task_file(&network, net, traffic)?;
                instance_from_files(&network, &tasks)
            })
            .collect::<Result<_>>()
    })?;

    let cells = spec.cells();
    let outcomes: Vec<Result<(bool, bool)>> = pool.install(|| {
        cells
            .par_iter()
            .map(|key| {
                let (results, marker) = (key.results_path(out), key.infeasible_path(out));
                if results.exists() || marker.exists() {
                    return Ok((false, marker.exists()));
                }
                let instance = &instances[key.net * spec.n_traffic_instances + key.traffic];
                match run_cell(spec, instance, key)? {
                    Some(run) => write_atomic(&results, |p| write_records_file(p, &run.records))?,
                    None => write_atomic(&marker, |p| write_json(p, key))?,
                }
                Ok((true, marker.exists()))
            })
            .collect()
    });

    let (mut ran, mut reused, mut infeasible) = (0, 0, Vec::new());
    for (key, outcome) in cells.iter().zip(outcomes) {
        let (fresh, gap) = outcome?;
        if fresh {
            ran += 1;
        } else {
            reused += 1;
        }
        if gap {
            infeasible.push(*key);
        }
    }

    // one (scheme, load) group in memory at a time
    let mut summary = Vec::new();
    let mut schemes = spec.schemes.clone();
    schemes.sort();
    schemes.dedup();
    let mut loads = spec.loads.clone();
    loads.sort_by(f64::total_cmp);
    loads.dedup();
    for &scheme in &schemes {
        for &load in &loads {
            let mut b = SummaryBuilder::with_population(spec.population);
            b.touch(scheme, load);
            for key in cells.iter().filter(|k| k.scheme == scheme && k.load == load) {
                if key.infeasible_path(out).exists() {
                    b.add_infeasible(scheme, load);
                } else {
                    b.add_records(&read_records_file(&key.results_path(out))?);
                }
            }
            summary.extend(b.finish());
        }
    }
    write_summary_file(&out.join("summary.csv"), &summary)?;
    let mut manifest = Manifest::new("sweep", spec);
    manifest.infeasible = infeasible.clone();
    write_json(&out.join("manifest.json"), &manifest)?;

    Ok(SweepReport {
        summary,
        ran,
        reused,
        infeasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec {
            n_networks: 2,
            n_traffic_instances: 1,
            loads: vec![0.5],
            schemes: vec![Scheme::JointSpbp],
            horizon: 40,
            network: GenParams {
                total_nodes: 30,
                k_choices: vec![3, 4],
                ..GenParams::default()
            },
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn default_spec_is_valid() {
        ExperimentSpec::default().validate().unwrap();
    }

    #[test]
    fn lp_with_two_types_is_rejected() {
        let spec = ExperimentSpec {
            schemes: vec![Scheme::JointLp],
            ..ExperimentSpec::default()
        };
        assert!(matches!(spec.validate(), Err(Error::MultiType)));
    }

    #[test]
    fn bad_grids_rejected() {
        for spec in [
            ExperimentSpec {
                loads: vec![1.0, 0.0],
                ..tiny_spec()
            },
            ExperimentSpec {
                n_networks: 0,
                ..tiny_spec()
            },
            ExperimentSpec {
                schemes: vec![],
                ..tiny_spec()
            },
        ] {
            assert!(spec.validate().is_err());
        }
    }

    #[test]
    fn seeds_differ_per_cell_key() {
        let s = tiny_spec();
        assert_ne!(s.network_seed(0), s.network_seed(1));
        assert_ne!(s.traffic_seed(0, 0), s.traffic_seed(1, 0));
        assert_ne!(s.traffic_seed(0, 0), s.traffic_seed(0, 1));
    }

    #[test]
    fn toml_round_trip() {
        let spec = tiny_spec();
        let text = toml::to_string(&spec).unwrap();
        let back: ExperimentSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let partial: ExperimentSpec = toml::from_str("master_seed = 9\nloads = [1.5]\n").unwrap();
        assert_eq!(partial.master_seed, 9);
        assert_eq!(partial.n_networks, 10);
        assert!(toml::from_str::<ExperimentSpec>("bogus = 1\n").is_err());
    }

    #[test]
    fn instance_files_must_match() {
        let spec = tiny_spec();
        let a = spec.network_file(0).unwrap();
        let b = spec.network_file(1).unwrap();
        let tasks = spec.task_file(&a, 0, 0).unwrap();
        assert!(instance_from_files(&a, &tasks).is_ok());
        assert!(matches!(instance_from_files(&b, &tasks), Err(Error::Mismatch(_))));
    }

    #[test]
    fn sweep_is_resumable() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec();
        let first = sweep(&spec, dir.path(), Some(2)).unwrap();
        assert_eq!((first.ran, first.reused), (2, 0));
        let summary = fs::read(dir.path().join("summary.csv")).unwrap();
        let second = sweep(&spec, dir.path(), Some(1)).unwrap();
        assert_eq!((second.ran, second.reused), (0, 2));
        assert_eq!(second.summary, first.summary);
        assert_eq!(fs::read(dir.path().join("summary.csv")).unwrap(), summary);
    }
}
