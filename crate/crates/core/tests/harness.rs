//! Configuration expansion, artifact layout and the command-line front-end.

use std::fs;
use std::path::Path;
use std::process::Command as Process;

use klflow::harness::aggregate::{AGGREGATE_COLUMNS, JOINED_COLUMNS};
use klflow::harness::study::{DISTILL_COLUMNS, STUDY_COLUMNS};
use klflow::harness::{execute, Command, ExperimentConfig, ExperimentKind, Profile};
use klflow::solver::RECORD_COLUMNS;

const KINDS: [ExperimentKind; 6] = [
    ExperimentKind::NpmleLocation,
    ExperimentKind::NpmleLocationScale,
    ExperimentKind::BayesSampling,
    ExperimentKind::SimplexVerify,
    ExperimentKind::StepSizeStudy,
    ExperimentKind::DistillStudy,
];

fn tiny(kind: &str, extra: &str, out: &Path) -> ExperimentConfig {
    let text = format!(
        r#"
kind = "{kind}"
seeds = [1, 2]

[solver]
outer_iters = 3
max_inner = 10
particles = 64

[model]
blocks = 2
width = 8

{extra}
"#
    );
    let mut c = ExperimentConfig::from_toml_str(&text, Some(Profile::Desk)).unwrap();
    c.out_dir = out.to_owned();
    if let Some(m) = c.metrics.as_mut() {
        m.reference_outer_factor = 1;
        m.w1_reference_points = 64;
    }
    c
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_owned()
}

#[test]
fn every_expanded_config_round_trips_through_toml() {
    for kind in KINDS {
        for profile in [Profile::Desk, Profile::Paper] {
            let c = ExperimentConfig::defaults(kind, profile, 2.0);
            let back = ExperimentConfig::from_toml_str(&c.to_toml().unwrap(), None).unwrap();
            assert_eq!(c, back, "{kind:?} {profile:?}");
        }
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let err =
        ExperimentConfig::from_toml_str("kind = \"npmle-location\"\n[solver]\nouter = 3\n", None)
            .unwrap_err();
    assert!(err.to_string().contains("outer"), "{err}");
}

#[test]
fn csv_headers_are_stable() {
    assert_eq!(
        RECORD_COLUMNS.join(","),
        "k,loss,kl_step,fv_var,inner_iters,stop_reason,wall_ms,seed"
    );
    assert_eq!(
        AGGREGATE_COLUMNS.join(","),
        "method,metric,k,mean,stderr,trials"
    );
    assert_eq!(JOINED_COLUMNS.join(","), "method,seed,k,metric,value");
    assert_eq!(
        STUDY_COLUMNS.join(","),
        "tau,gamma,seed,flagged,failed_at,outer_iters,mean_inner,converged_outer,terminal_loss"
    );
    assert_eq!(
        DISTILL_COLUMNS.join(","),
        "method,seed,k,steps,l2,reached_tol,loss_before,loss_after"
    );
}

#[test]
fn compare_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny(
        "npmle-location",
        "[data]\nn = 60\n[grid]\nlocation_points = 6\nsteps = 3\n",
        dir.path(),
    );
    let out = execute(Command::Compare, &c).unwrap();
    for f in [
        "config_echo.toml",
        "series.csv",
        "aggregate.csv",
        "loss.svg",
        "nll_gap.svg",
        "report.json",
        "iklpd/trial_1.csv",
        "iklpd/records_2.csv",
        "kw-grid/trial_2.csv",
        "iklpd-stochastic/trial_1.csv",
    ] {
        assert!(dir.path().join(f).exists(), "missing {f}");
        assert!(out.report.artifacts.iter().any(|a| a == f), "unlisted {f}");
    }
    assert_eq!(
        header(&dir.path().join("aggregate.csv")),
        AGGREGATE_COLUMNS.join(",")
    );
    assert_eq!(
        header(&dir.path().join("iklpd/records_1.csv")),
        RECORD_COLUMNS.join(",")
    );
    let echo = ExperimentConfig::load(&dir.path().join("config_echo.toml"), None).unwrap();
    assert_eq!(echo, c);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["kind"], "npmle-location");
    assert!(report["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .any(|v| v["name"] == "grid-bias"));
    let loss = out
        .aggregate
        .iter()
        .filter(|r| r.metric == "loss" && r.method == "iklpd")
        .count();
    assert_eq!(loss, 4);
}

#[test]
fn run_uses_the_first_method_with_flat_trial_files() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny("bayes-sampling", "", dir.path());
    let out = execute(Command::Run, &c).unwrap();
    assert_eq!(out.report.methods, vec!["iklpd"]);
    for f in ["trial_1.csv", "trial_2.csv", "w1.svg", "kl.svg"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    assert_eq!(
        header(&dir.path().join("trial_1.csv")),
        JOINED_COLUMNS.join(",")
    );
}

#[test]
fn same_config_gives_identical_series() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let extra = "[data]\nn = 60\n";
    execute(Command::Run, &tiny("npmle-location", extra, a.path())).unwrap();
    execute(Command::Run, &tiny("npmle-location", extra, b.path())).unwrap();
    let read = |d: &Path| fs::read_to_string(d.join("series.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn step_size_study_writes_its_table() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "[data]\nn = 40\n[study]\ntaus = [1.0, 50.0]\ngammas = [1e-3, 1e-3]\n";
    let out = execute(Command::Study, &tiny("step-size-study", extra, dir.path())).unwrap();
    assert_eq!(out.report.study.len(), 2);
    assert_eq!(out.study.len(), 4);
    assert_eq!(
        header(&dir.path().join("study.csv")),
        STUDY_COLUMNS.join(",")
    );
    assert!(dir.path().join("inner_iters.svg").exists());
    assert!(out.verdict("large-step-flagged").is_some());
}

#[test]
fn distill_study_records_compressions() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "[data]\nn = 40\n[compose]\nshort_len = 1\nmax_len = 2\ncompressed_len = 1\ndistill_iters = 20\nwidth = 8\n";
    let out = execute(Command::Study, &tiny("distill-study", extra, dir.path())).unwrap();
    let text = fs::read_to_string(dir.path().join("distillations.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), DISTILL_COLUMNS.join(","));
    assert!(text.lines().count() > 1);
    assert!(out.verdict("composed-matches-retrain").is_some());
}

#[test]
fn study_command_rejects_plain_experiments() {
    let dir = tempfile::tempdir().unwrap();
    assert!(execute(Command::Study, &tiny("bayes-sampling", "", dir.path())).is_err());
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("exp.toml");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn cli_runs_with_flags_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "kind = \"bayes-sampling\"\n[solver]\nouter_iters = 2\nmax_inner = 5\nparticles = 32\n[model]\nblocks = 2\nwidth = 8\n[metrics]\nw1_reference_points = 32\n",
    );
    let out = dir.path().join("out");
    let status = Process::new(env!("CARGO_BIN_EXE_klflow"))
        .args([
            "run",
            cfg.to_str().unwrap(),
            "--seed",
            "5",
            "--strict",
            "--profile",
            "desk",
            "--out",
        ])
        .arg(&out)
        .env("KLFLOW_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    assert!(out.join("trial_5.csv").exists());
    let echo = ExperimentConfig::load(&out.join("config_echo.toml"), None).unwrap();
    assert_eq!(echo.seeds, vec![5]);
    assert!(echo.solver.unwrap().strict);
}

#[test]
fn cli_verify_fails_on_a_failed_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "kind = \"bayes-sampling\"\nseeds = [1]\n[solver]\nouter_iters = 1\nmax_inner = 2\nparticles = 32\n[model]\nblocks = 1\nwidth = 4\n[metrics]\nw1_reference_points = 32\n[verdicts]\nw1_threshold = 1e-9\n",
    );
    let status = Process::new(env!("CARGO_BIN_EXE_klflow"))
        .args(["verify", cfg.to_str().unwrap(), "--threads", "1", "--out"])
        .arg(dir.path().join("out"))
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn cli_reports_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "kind = \"no-such-kind\"\n");
    let out = Process::new(env!("CARGO_BIN_EXE_klflow"))
        .args(["run", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
