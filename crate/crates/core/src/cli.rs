//! `vsink` command line: generate instances, run one simulation, sweep a
//! grid, and summarize result files.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime or IO
//! error, 3 LP infeasible.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baselines::Scheme;
use crate::engine::{run_instance, FadingParams, RunOutput, Scenario, SimConfig};
use crate::error::{Error, Result};
use crate::experiment::{self, read_json, write_json, ExperimentSpec, NetworkFile, TaskFile};
use crate::lp::to_lp_format;
use crate::metrics::{read_records_file, write_records_file, write_summary_file, Population, SummaryBuilder};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "vsink", version, about = "Joint offloading and routing simulator (SP-BP over virtual sinks)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write network and task files for every (network, traffic) pair.
    Generate(GridArgs),
    /// Run one scheme at one load on one instance.
    Run(RunArgs),
    /// Run every (network, traffic, scheme, load) cell and summarize.
    Sweep(SweepArgs),
    /// Pool result CSVs into a summary CSV.
    Summarize(SummarizeArgs),
}

/// Experiment grid; flags override values from `--config`.
#[derive(Debug, Args)]
pub struct GridArgs {
    /// TOML file with ExperimentSpec keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub master_seed: Option<u64>,
    /// Number of network instances.
    #[arg(long)]
    pub networks: Option<usize>,
    /// Traffic instances per network.
    #[arg(long)]
    pub traffic_instances: Option<usize>,
    /// two_type or single_type.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Horizon in slots.
    #[arg(long)]
    pub horizon: Option<u32>,
    /// Total nodes per network.
    #[arg(long)]
    pub nodes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Comma-separated loads.
    #[arg(long, value_delimiter = ',')]
    pub loads: Option<Vec<f64>>,
    /// Comma-separated schemes: joint_spbp, spbp_spbp, bp_spbp, joint_lp.
    #[arg(long, value_delimiter = ',')]
    pub schemes: Option<Vec<String>>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Summary sample: job or task.
    #[arg(long)]
    pub population: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Network file from `generate`.
    #[arg(long)]
    pub network: PathBuf,
    /// Task file from `generate`.
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long)]
    pub scheme: String,
    #[arg(long)]
    pub load: f64,
    /// Run seed; defaults to the task file's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to the horizon the task file was generated for.
    #[arg(long)]
    pub horizon: Option<u32>,
    #[arg(long, default_value_t = crate::compute::DEFAULT_PROCESSORS)]
    pub processors: usize,
    /// Standard deviation of the per-slot fading factor.
    #[arg(long)]
    pub fading_sd: Option<f64>,
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    /// Also write queue, schedule and completion traces.
    #[arg(long)]
    pub trace: bool,
    /// Summary sample: job or task.
    #[arg(long, default_value = "job")]
    pub population: String,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Result CSVs, `.infeasible` markers, or directories holding them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "summary.csv")]
    pub out: PathBuf,
    /// Summary sample: job or task.
    #[arg(long, default_value = "job")]
    pub population: String,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::LpInfeasible { .. } => EXIT_INFEASIBLE,
        Error::InvalidParams(_) | Error::MultiType | Error::Mismatch(_) | Error::Config { .. } => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Generate(args) => cmd_generate(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Summarize(args) => cmd_summarize(&args),
    }
}

fn parse_scenario(s: &str) -> Result<Scenario> {
    match s {
        "two_type" => Ok(Scenario::TwoType),
        "single_type" => Ok(Scenario::SingleType),
        _ => Err(Error::InvalidParams(format!("unknown scenario {s:?}"))),
    }
}

impl GridArgs {
    pub fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::from_toml(path)?,
            None => ExperimentSpec::default(),
        };
        if let Some(v) = self.master_seed {
            spec.master_seed = v;
        }
        if let Some(v) = self.networks {
            spec.n_networks = v;
        }
        if let Some(v) = self.traffic_instances {
            spec.n_traffic_instances = v;
        }
        if let Some(v) = &self.scenario {
            spec.scenario = parse_scenario(v)?;
        }
        if let Some(v) = self.horizon {
            spec.horizon = v;
        }
        if let Some(v) = self.nodes {
            spec.network.total_nodes = v;
        }
        Ok(spec)
    }
}

impl SweepArgs {
    pub fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = self.grid.spec()?;
        if let Some(v) = &self.loads {
            spec.loads = v.clone();
        }
        if let Some(v) = &self.schemes {
            spec.schemes = v.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        if let Some(v) = &self.population {
            spec.population = v.parse()?;
        }
        Ok(spec)
    }
}

pub fn cmd_generate(args: &GridArgs) -> Result<()> {
    let spec = args.spec()?;
    let written = experiment::generate(&spec, &args.out)?;
    println!("wrote {} files under {}", written.len(), args.out.display());
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_rows<S: serde::Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(serde::Serialize)]
struct BacklogRow {
    slot: usize,
    backlog: u64,
}

#[derive(serde::Serialize)]
struct CompletionRow {
    job: usize,
    node: usize,
    task_type: usize,
    fetch_time: f64,
    finish_time: f64,
}

#[derive(serde::Serialize)]
struct RunManifest<'a> {
    version: u32,
    tool: &'static str,
    command: &'static str,
    network: &'a Path,
    tasks: &'a Path,
    network_seed: u64,
    task_seed: u64,
    population: Population,
    config: &'a SimConfig,
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let network: NetworkFile = read_json(&args.network)?;
    let tasks: TaskFile = read_json(&args.tasks)?;
    let instance = experiment::instance_from_files(&network, &tasks)?;
    let scheme: Scheme = args.scheme.parse()?;
    let population: Population = args.population.parse()?;
    let cfg = SimConfig {
        horizon: args.horizon.unwrap_or(tasks.params.horizon),
        scheme,
        load: args.load,
        seed: args.seed.unwrap_or(tasks.seed),
        processors: args.processors,
        fading: FadingParams {
            sd: args.fading_sd.unwrap_or(FadingParams::default().sd),
            ..FadingParams::default()
        },
        trace: args.trace,
    };
    let out = run_instance(&instance, &cfg)?;
    create_dir(&args.out)?;
    write_run_outputs(&args.out, &out, population)?;
    write_json(
        &args.out.join("manifest.json"),
        &RunManifest {
            version: experiment::FORMAT_VERSION,
            tool: concat!("vsink ", env!("CARGO_PKG_VERSION")),
            command: "run",
            network: &args.network,
            tasks: &args.tasks,
            network_seed: network.seed,
            task_seed: tasks.seed,
            population,
            config: &cfg,
        },
    )?;
    let done = out.records.iter().filter(|r| !r.censored).count();
    println!(
        "{scheme} at load {}: {} jobs, {} completed, {} censored; results in {}",
        cfg.load,
        out.records.len(),
        done,
        out.records.len() - done,
        args.out.display()
    );
    Ok(())
}

fn write_run_outputs(dir: &Path, out: &RunOutput, population: Population) -> Result<()> {
    write_records_file(&dir.join("results.csv"), &out.records)?;
    let mut b = SummaryBuilder::with_population(population);
    if let Some(first) = out.records.first() {
        b.touch(first.scheme, first.load);
    }
    b.add_records(&out.records);
    write_summary_file(&dir.join("summary.csv"), &b.finish())?;
    let backlog: Vec<BacklogRow> = out
        .backlog
        .iter()
        .enumerate()
        .map(|(slot, &backlog)| BacklogRow { slot, backlog })
        .collect();
    write_rows(&dir.join("backlog.csv"), &backlog)?;
    if !out.queue_trace.is_empty() || !out.schedule_trace.is_empty() {
        write_rows(&dir.join("queue_trace.csv"), &out.queue_trace)?;
        write_rows(&dir.join("schedule_trace.csv"), &out.schedule_trace)?;
        let completions: Vec<CompletionRow> = out
            .completions
            .iter()
            .map(|c| CompletionRow {
                job: c.job,
                node: c.node,
                task_type: c.task_type,
                fetch_time: c.fetch_time,
                finish_time: c.finish_time,
            })
            .collect();
        write_rows(&dir.join("completions.csv"), &completions)?;
    }
    if let Some((problem, solution)) = &out.lp {
        let path = dir.join("lp.lp");
        fs::write(&path, to_lp_format(problem)).map_err(|e| Error::io(&path, e))?;
        write_json(&dir.join("lp_solution.json"), solution)?;
    }
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let spec = args.spec()?;
    let report = experiment::sweep(&spec, &args.grid.out, args.threads)?;
    println!(
        "{} cells run, {} reused, {} LP-infeasible; summary in {}",
        report.ran,
        report.reused,
        report.infeasible.len(),
        args.grid.out.join("summary.csv").display()
    );
    Ok(())
}

fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found = Vec::new();
            for dir in [input.clone(), input.join("cells")] {
                let Ok(entries) = fs::read_dir(&dir) else { continue };
                for entry in entries {
                    let path = entry.map_err(|e| Error::io(&dir, e))?.path();
                    let ext = path.extension().and_then(|e| e.to_str());
                    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    let is_cell = ext == Some("infeasible") || (ext == Some("csv") && name.starts_with('n'));
                    if is_cell || name == "results.csv" {
                        found.push(path);
                    }
                }
            }
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

pub fn cmd_summarize(args: &SummarizeArgs) -> Result<()> {
    let population: Population = args.population.parse()?;
    let files = collect_inputs(&args.inputs)?;
    if files.is_empty() {
        return Err(Error::InvalidParams("no result files found".into()));
    }
    let mut b = SummaryBuilder::with_population(population);
    for path in &files {
        if path.extension().is_some_and(|e| e == "infeasible") {
            let key: experiment::CellKey = read_json(path)?;
            b.add_infeasible(key.scheme, key.load);
        } else {
            b.add_records(&read_records_file(path)?);
        }
    }
    let rows = b.finish();
    write_summary_file(&args.out, &rows)?;
    println!("summarized {} files into {}", files.len(), args.out.display());
    Ok(())
}
