use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vsink_core::experiment::{NetworkFile, TaskFile};

fn vsink(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsink"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: &[&str] = &["--networks", "1", "--traffic-instances", "1", "--nodes", "30", "--horizon", "150"];

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("spec.toml");
    fs::write(&path, format!("[network]\nk_choices = [3, 4]\n{extra}")).unwrap();
    path.to_string_lossy().into_owned()
}

fn with(base: &[&str], more: &[&str]) -> Vec<String> {
    base.iter().chain(more).map(|s| s.to_string()).collect()
}

fn args(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn help_lists_subcommands_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = vsink(dir.path(), &["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["generate", "run", "sweep", "summarize"] {
        assert!(text.contains(cmd), "{text}");
    }
    let out = vsink(dir.path(), &["run", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in ["--network", "--tasks", "--scheme", "--load", "--seed", "--trace"] {
        assert!(text.contains(flag), "{text}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&vsink(dir.path(), &["sweep", "--bogus"])), 1);
    assert_eq!(code(&vsink(dir.path(), &[])), 1);
    let out = vsink(dir.path(), &["sweep", "--schemes", "nope"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("unknown scheme"));
}

#[test]
fn minimal_generate_gives_two_node_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, "n_networks = 1\nn_traffic_instances = 1\n[network]\nk_choices = [1]\ntier2_per_core = 0\ntotal_nodes = 2\n").unwrap();
    let out = vsink(dir.path(), &["generate", "--config", "tiny.toml", "--out", "g"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let net: NetworkFile =
        serde_json::from_str(&fs::read_to_string(dir.path().join("g/networks/network_000.json")).unwrap()).unwrap();
    assert_eq!(net.topology.n_nodes(), 2);
    assert_eq!(net.topology.n_links(), 1);
    assert_eq!(fs::read_dir(dir.path().join("g/networks")).unwrap().count(), 1);
}

#[test]
fn generate_is_deterministic_and_counts_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    for out in ["a", "b"] {
        let a = with(&["generate", "--config", &cfg, "--out", out], &["--networks", "3", "--traffic-instances", "2", "--nodes", "30"]);
        assert_eq!(code(&vsink(dir.path(), &args(&a))), 0);
    }
    assert_eq!(fs::read_dir(dir.path().join("a/networks")).unwrap().count(), 3);
    assert_eq!(fs::read_dir(dir.path().join("a/tasks")).unwrap().count(), 6);
    for sub in ["networks/network_002.json", "tasks/tasks_001_001.json", "manifest.json"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(sub)).unwrap(),
            fs::read(dir.path().join("b").join(sub)).unwrap(),
            "{sub}"
        );
    }
}

fn generate_small(dir: &Path, scenario: &str) {
    let cfg = small_config(dir, "");
    let a = with(&["generate", "--config", &cfg, "--out", "g", "--scenario", scenario], SMALL);
    let out = vsink(dir, &args(&a));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

const NET: &str = "g/networks/network_000.json";
const TASKS: &str = "g/tasks/tasks_000_000.json";

#[test]
fn run_writes_results_with_all_columns() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "two_type");
    let out = vsink(
        dir.path(),
        &["run", "--network", NET, "--tasks", TASKS, "--scheme", "joint_spbp", "--load", "1", "--out", "r", "--trace"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let results = fs::read_to_string(dir.path().join("r/results.csv")).unwrap();
    assert_eq!(
        results.lines().next().unwrap(),
        "seed,scheme,load,job_id,task_type,source,arrival_slot,completion_time,hops,processed_at,censored"
    );
    assert!(results.lines().count() > 1);
    let summary = fs::read_to_string(dir.path().join("r/summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "scheme,load,metric,p25,median,p75,n_jobs,n_censored");
    for f in ["manifest.json", "backlog.csv", "queue_trace.csv", "schedule_trace.csv", "completions.csv"] {
        assert!(dir.path().join("r").join(f).exists(), "{f}");
    }
}

#[test]
fn joint_lp_on_two_types_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "two_type");
    let out = vsink(dir.path(), &["run", "--network", NET, "--tasks", TASKS, "--scheme", "joint_lp", "--load", "1"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("joint_lp requires single task type"));
}

#[test]
fn infeasible_lp_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "single_type");
    let out = vsink(dir.path(), &["run", "--network", NET, "--tasks", TASKS, "--scheme", "joint_lp", "--load", "500", "--out", "r"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let out = vsink(dir.path(), &["run", "--network", NET, "--tasks", TASKS, "--scheme", "joint_lp", "--load", "0.5", "--out", "r"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("r/lp.lp").exists());
}

#[test]
fn missing_file_is_a_runtime_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = vsink(dir.path(), &["run", "--network", "nope.json", "--tasks", "nope2.json", "--scheme", "joint_spbp", "--load", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("nope.json"));
}

#[test]
fn single_cell_sweep_equals_run() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path(), "two_type");
    let cfg = small_config(dir.path(), "");
    let s = with(&["sweep", "--config", &cfg, "--out", "s", "--loads", "1.5", "--schemes", "spbp_spbp"], SMALL);
    let out = vsink(dir.path(), &args(&s));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = vsink(
        dir.path(),
        &["run", "--network", NET, "--tasks", TASKS, "--scheme", "spbp_spbp", "--load", "1.5", "--out", "r"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        fs::read(dir.path().join("s/summary.csv")).unwrap(),
        fs::read(dir.path().join("r/summary.csv")).unwrap()
    );
    let tasks: TaskFile = serde_json::from_str(&fs::read_to_string(dir.path().join(TASKS)).unwrap()).unwrap();
    let results = fs::read_to_string(dir.path().join("r/results.csv")).unwrap();
    assert!(results.lines().nth(1).unwrap().starts_with(&tasks.seed.to_string()));
}

#[test]
fn interrupted_sweep_resumes_to_same_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let s = with(&["sweep", "--config", &cfg, "--out", "s", "--loads", "0.5,1", "--threads", "2"], SMALL);
    assert_eq!(code(&vsink(dir.path(), &args(&s))), 0);
    let summary = fs::read(dir.path().join("s/summary.csv")).unwrap();
    // simulate an interruption: one cell and the summary are gone
    let cells = dir.path().join("s/cells");
    let victim = fs::read_dir(&cells).unwrap().next().unwrap().unwrap().path();
    fs::remove_file(victim).unwrap();
    fs::remove_file(dir.path().join("s/summary.csv")).unwrap();
    let out = vsink(dir.path(), &args(&s));
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 cells run, 5 reused"));
    assert_eq!(fs::read(dir.path().join("s/summary.csv")).unwrap(), summary);

    let out = vsink(dir.path(), &["summarize", "s", "--out", "again.csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read(dir.path().join("again.csv")).unwrap(), summary);
}

#[test]
fn sweep_records_lp_infeasibility_as_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let s = with(
        &["sweep", "--config", &cfg, "--out", "s", "--scenario", "single_type", "--loads", "0.5,500", "--schemes", "joint_lp,joint_spbp"],
        SMALL,
    );
    let out = vsink(dir.path(), &args(&s));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = fs::read_to_string(dir.path().join("s/summary.csv")).unwrap();
    assert!(summary.contains("joint_lp,500.0,makespan,,,,0,0"), "{summary}");
    assert!(!summary.contains("joint_lp,0.5,makespan,,"), "{summary}");
    let manifest = fs::read_to_string(dir.path().join("s/manifest.json")).unwrap();
    assert!(manifest.contains("\"infeasible\""));
}
