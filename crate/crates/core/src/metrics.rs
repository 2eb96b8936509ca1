//! Per-job records, percentile summaries and their CSV forms.
//!
//! The summary CSV is the interface consumed by the plotting layer:
//! `scheme,load,metric,p25,median,p75,n_jobs,n_censored`, one row per
//! (scheme, load, metric). Cells where the LP was infeasible carry empty
//! percentile fields.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::Scheme;
use crate::error::{Error, Result};
use crate::extended::TaskType;
use crate::netgraph::NodeId;

pub const RESULTS_HEADER: [&str; 11] = [
    "seed",
    "scheme",
    "load",
    "job_id",
    "task_type",
    "source",
    "arrival_slot",
    "completion_time",
    "hops",
    "processed_at",
    "censored",
];

pub const SUMMARY_HEADER: [&str; 8] = ["scheme", "load", "metric", "p25", "median", "p75", "n_jobs", "n_censored"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub scheme: Scheme,
    pub load: f64,
    pub job_id: usize,
    pub task_type: TaskType,
    pub source: NodeId,
    pub arrival_slot: u32,
    pub completion_time: Option<f64>,
    pub hops: u32,
    pub processed_at: Option<NodeId>,
    pub censored: bool,
}

impl MetricsRecord {
    pub fn makespan(&self) -> Option<f64> {
        self.completion_time.map(|t| t - self.arrival_slot as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Makespan,
    Hops,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub load: f64,
    pub metric: Metric,
    pub p25: Option<f64>,
    pub median: Option<f64>,
    pub p75: Option<f64>,
    /// Samples behind the percentiles: completed jobs, or tasks with at
    /// least one completed job.
    pub n_jobs: usize,
    pub n_censored: usize,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    let last = sorted.len().checked_sub(1)?;
    let pos = q.clamp(0.0, 1.0) * last as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile(&v, 0.5)
}

/// What one summary sample is: a job, or a task's mean over its completed
/// jobs (the per-task average makespan of the offloading objective).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    #[default]
    Job,
    Task,
}

impl std::str::FromStr for Population {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "job" => Ok(Population::Job),
            "task" => Ok(Population::Task),
            _ => Err(Error::InvalidParams(format!("unknown population {s:?}"))),
        }
    }
}

/// Outcome of one (instance, scheme, load) run as seen by the summary.
#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Ran(Vec<MetricsRecord>),
    Infeasible,
}

fn load_key(load: f64) -> u64 {
    // loads are positive, so the bit pattern orders like the value
    load.to_bits()
}

#[derive(Debug, Default)]
struct Group {
    makespan: Vec<f64>,
    hops: Vec<f64>,
    censored: usize,
}

/// (scheme, load key, seed, source, type) identifies one task stream.
type TaskKey = (Scheme, u64, u64, NodeId, TaskType);

/// Pools jobs by (scheme, load). A group with any infeasible cell becomes a
/// gap: every instance in the grid must be served for the point to count.
/// With the task population, each `add_records` call must hold whole tasks
/// (one run's records), since tasks are keyed by seed, source and type.
#[derive(Debug, Default)]
pub struct SummaryBuilder {
    population: Population,
    groups: BTreeMap<(Scheme, u64), Option<Group>>,
}

impl SummaryBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_population(population: Population) -> Self {
        SummaryBuilder {
            population,
            ..Self::default()
        }
    }

    fn group(&mut self, scheme: Scheme, load: f64) -> &mut Option<Group> {
        self.groups
            .entry((scheme, load_key(load)))
            .or_insert_with(|| Some(Group::default()))
    }

    pub fn add_infeasible(&mut self, scheme: Scheme, load: f64) {
        *self.group(scheme, load) = None;
    }

    /// Registers an empty cell so its group appears even without jobs.
    pub fn touch(&mut self, scheme: Scheme, load: f64) {
        self.group(scheme, load);
    }

    pub fn add_records(&mut self, records: &[MetricsRecord]) {
        if self.population == Population::Task {
            return self.add_task_means(records);
        }
        for r in records {
            let Some(g) = self.group(r.scheme, r.load) else {
                continue;
            };
            match r.makespan().filter(|_| !r.censored) {
                Some(m) => {
                    g.makespan.push(m);
                    g.hops.push(r.hops as f64);
                }
                None => g.censored += 1,
            }
        }
    }

    fn add_task_means(&mut self, records: &[MetricsRecord]) {
        // (sum makespan, sum hops, completed, censored) per task
        let mut tasks: BTreeMap<TaskKey, (f64, f64, usize, usize)> = BTreeMap::new();
        for r in records {
            let t = tasks
                .entry((r.scheme, load_key(r.load), r.seed, r.source, r.task_type))
                .or_default();
            match r.makespan().filter(|_| !r.censored) {
                Some(m) => {
                    t.0 += m;
                    t.1 += r.hops as f64;
                    t.2 += 1;
                }
                None => t.3 += 1,
            }
        }
        for ((scheme, key, ..), (ms, hops, done, censored)) in tasks {
            let Some(g) = self.group(scheme, f64::from_bits(key)) else {
                continue;
            };
            g.censored += censored;
            if done > 0 {
                g.makespan.push(ms / done as f64);
                g.hops.push(hops / done as f64);
            }
        }
    }

    pub fn add(&mut self, scheme: Scheme, load: f64, outcome: &CellOutcome) {
        match outcome {
            CellOutcome::Infeasible => self.add_infeasible(scheme, load),
            CellOutcome::Ran(records) => {
                self.touch(scheme, load);
                self.add_records(records);
            }
        }
    }

    pub fn finish(self) -> Vec<SummaryRow> {
        let mut rows = Vec::new();
        for ((scheme, key), group) in self.groups {
            let load = f64::from_bits(key);
            let Some(mut g) = group else {
                for metric in [Metric::Makespan, Metric::Hops] {
                    rows.push(SummaryRow {
                        scheme,
                        load,
                        metric,
                        p25: None,
                        median: None,
                        p75: None,
                        n_jobs: 0,
                        n_censored: 0,
                    });
                }
                continue;
            };
            for (metric, values) in [(Metric::Makespan, &mut g.makespan), (Metric::Hops, &mut g.hops)] {
                values.sort_by(f64::total_cmp);
                rows.push(SummaryRow {
                    scheme,
                    load,
                    metric,
                    p25: percentile(values, 0.25),
                    median: percentile(values, 0.5),
                    p75: percentile(values, 0.75),
                    n_jobs: values.len(),
                    n_censored: g.censored,
                });
            }
        }
        rows
    }
}

pub fn summarize(cells: &[(Scheme, f64, CellOutcome)], population: Population) -> Vec<SummaryRow> {
    let mut b = SummaryBuilder::with_population(population);
    for (scheme, load, outcome) in cells {
        b.add(*scheme, *load, outcome);
    }
    b.finish()
}

pub fn write_records<W: Write>(w: W, records: &[MetricsRecord]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(RESULTS_HEADER)?;
    for r in records {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<results>", e))?;
    Ok(())
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<MetricsRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != RESULTS_HEADER {
        return Err(Error::Mismatch(format!("unexpected results header {header:?}")));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<summary>", e))?;
    Ok(())
}

pub fn read_summary<R: Read>(r: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_records_file(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(std::io::BufWriter::new(f), records)
}

pub fn read_records_file(path: &Path) -> Result<Vec<MetricsRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(std::io::BufReader::new(f))
}

pub fn write_summary_file(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_summary(std::io::BufWriter::new(f), rows)
}

/// Least-squares slope of `y` against `0..n`.
pub fn ols_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    if y.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(job_id: usize, arrival: u32, done: Option<f64>, hops: u32) -> MetricsRecord {
        MetricsRecord {
            seed: 1,
            scheme: Scheme::JointSpbp,
            load: 1.5,
            job_id,
            task_type: 0,
            source: 3,
            arrival_slot: arrival,
            completion_time: done,
            hops,
            processed_at: done.map(|_| 7),
            censored: done.is_none(),
        }
    }

    #[test]
    fn percentiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), Some(2.5));
        assert_eq!(percentile(&v, 0.25), Some(1.75));
        assert_eq!(percentile(&v, 0.75), Some(3.25));
        assert_eq!(percentile(&[7.0], 0.25), Some(7.0));
        assert_eq!(percentile(&[], 0.5), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
    }

    #[test]
    fn records_round_trip_with_exact_header() {
        let records = vec![rec(0, 2, Some(5.25), 3), rec(1, 4, None, 1)];
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULTS_HEADER.join(","));
        assert_eq!(text.lines().nth(2).unwrap(), "1,joint_spbp,1.5,1,0,3,4,,1,,true");
        assert_eq!(read_records(&buf[..]).unwrap(), records);
    }

    #[test]
    fn summary_excludes_censored_and_marks_gaps() {
        let cells = vec![
            (Scheme::JointSpbp, 1.5, CellOutcome::Ran(vec![rec(0, 0, Some(2.0), 1), rec(1, 0, Some(4.0), 3)])),
            (Scheme::JointSpbp, 1.5, CellOutcome::Ran(vec![rec(0, 0, None, 0)])),
            (
                Scheme::JointLp,
                2.0,
                CellOutcome::Ran(vec![MetricsRecord {
                    scheme: Scheme::JointLp,
                    load: 2.0,
                    ..rec(0, 0, Some(1.0), 0)
                }]),
            ),
            (Scheme::JointLp, 2.0, CellOutcome::Infeasible),
        ];
        let rows = summarize(&cells, Population::Job);
        assert_eq!(rows.len(), 4);
        let ms = &rows[0];
        assert_eq!((ms.scheme, ms.metric), (Scheme::JointSpbp, Metric::Makespan));
        assert_eq!((ms.median, ms.n_jobs, ms.n_censored), (Some(3.0), 2, 1));
        assert_eq!(rows[1].median, Some(2.0));
        assert!(rows[2].median.is_none() && rows[3].p25.is_none());

        let mut buf = Vec::new();
        write_summary(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), SUMMARY_HEADER.join(","));
        assert!(text.contains("joint_lp,2.0,makespan,,,,0,0"));
        assert_eq!(read_summary(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn task_population_averages_within_tasks() {
        let mut other = rec(3, 0, Some(10.0), 4);
        other.source = 9;
        let records = vec![rec(0, 0, Some(2.0), 1), rec(1, 0, Some(4.0), 3), rec(2, 0, None, 0), other];
        let rows = summarize(&[(Scheme::JointSpbp, 1.5, CellOutcome::Ran(records))], Population::Task);
        // task means: source 3 -> (3.0, 2.0), source 9 -> (10.0, 4.0)
        assert_eq!((rows[0].median, rows[0].n_jobs, rows[0].n_censored), (Some(6.5), 2, 1));
        assert_eq!(rows[1].median, Some(3.0));
        assert_eq!("task".parse::<Population>().unwrap(), Population::Task);
        assert!("jobs".parse::<Population>().is_err());
    }

    #[test]
    fn slope_of_line() {
        let y: Vec<f64> = (0..10).map(|i| 3.0 + 0.5 * i as f64).collect();
        assert!((ols_slope(&y) - 0.5).abs() < 1e-12);
        assert_eq!(ols_slope(&[1.0]), 0.0);
    }
}
