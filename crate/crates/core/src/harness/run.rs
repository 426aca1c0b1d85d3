use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use super::aggregate::{
    aggregate, mean_series, mean_stderr, write_aggregate, write_joined, AggregateRow,
};
use super::config::{ExperimentConfig, ExperimentKind, Method};
use super::experiments::{gap_reference, run_method, MethodRun, Problem};
use super::study::{
    is_monotone, step_size_study, write_distillations, write_study, StudyRow, StudyTrial,
};
use super::suite::{simplex_suite, CheckOutcome};
use super::svg::{Chart, Series};
use crate::error::{Error, Result};
use crate::solver::write_records;

/// What the front-end was asked to do.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// The first configured method only.
    Run,
    /// Every configured method on shared data.
    Compare,
    /// Every configured method, gated on the verdicts.
    Verify,
    /// The step-size or distillation study.
    Study,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Run => "run",
            Self::Compare => "compare",
            Self::Verify => "verify",
            Self::Study => "study",
        }
    }
}

/// A named pass/fail judgement.
#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_owned(),
            passed,
            detail,
        }
    }
}

/// Terminal value of one metric, averaged over trials.
#[derive(Clone, Debug, Serialize)]
pub struct Terminal {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Contents of `report.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub command: Command,
    pub kind: String,
    pub profile: String,
    pub seeds: Vec<u64>,
    pub methods: Vec<String>,
    pub passed: bool,
    pub verdicts: Vec<Verdict>,
    pub checks: Vec<CheckOutcome>,
    pub study: Vec<StudyRow>,
    pub terminal: Vec<Terminal>,
    pub notes: Vec<String>,
    pub artifacts: Vec<String>,
    pub seconds: f64,
}

/// Everything [`execute`] produced, in memory.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Report,
    pub runs: Vec<MethodRun>,
    pub aggregate: Vec<AggregateRow>,
    pub study: Vec<StudyTrial>,
}

impl Outcome {
    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.report.verdicts.iter().find(|v| v.name == name)
    }
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_owned(),
            written: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.written.push(name.to_owned());
        Ok(BufWriter::new(File::create(path)?))
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        self.written.push(name.to_owned());
        fs::write(self.dir.join(name), body)?;
        Ok(())
    }
}

/// Runs `command` on `config` and writes its artifacts under `config.out_dir`.
pub fn execute(command: Command, config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let start = Instant::now();
    let mut art = Artifacts::new(&config.out_dir)?;
    art.text("config_echo.toml", &config.to_toml()?)?;
    info!(
        "{} {} ({:?} profile) -> {}",
        command.as_str(),
        config.kind.as_str(),
        config.profile,
        config.out_dir.display()
    );

    let mut outcome = Outcome {
        report: Report {
            command,
            kind: config.kind.as_str().to_owned(),
            profile: format!("{:?}", config.profile).to_lowercase(),
            seeds: config.seeds.clone(),
            methods: Vec::new(),
            passed: true,
            verdicts: Vec::new(),
            checks: Vec::new(),
            study: Vec::new(),
            terminal: Vec::new(),
            notes: Vec::new(),
            artifacts: Vec::new(),
            seconds: 0.0,
        },
        runs: Vec::new(),
        aggregate: Vec::new(),
        study: Vec::new(),
    };

    match (config.kind, command) {
        (ExperimentKind::SimplexVerify, Command::Compare | Command::Study) => {
            return Err(Error::Config(format!(
                "`{}` does not apply to simplex-verify",
                command.as_str()
            )))
        }
        (ExperimentKind::SimplexVerify, _) => simplex(config, &mut art, &mut outcome)?,
        (ExperimentKind::StepSizeStudy, _) => study(config, &mut art, &mut outcome)?,
        (_, Command::Study) if config.kind != ExperimentKind::DistillStudy => {
            return Err(Error::Config(format!(
                "`study` needs a study kind, not {}",
                config.kind.as_str()
            )))
        }
        _ => trials(command, config, &mut art, &mut outcome)?,
    }

    let report = &mut outcome.report;
    report.passed = report.verdicts.iter().all(|v| v.passed);
    report.seconds = start.elapsed().as_secs_f64();
    art.written.push("report.json".into());
    report.artifacts = art.written.clone();
    let json = serde_json::to_string_pretty(&*report).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(art.dir.join("report.json"), json)?;
    Ok(outcome)
}

fn simplex(config: &ExperimentConfig, art: &mut Artifacts, out: &mut Outcome) -> Result<()> {
    let cfg = config
        .simplex
        .as_ref()
        .ok_or_else(|| Error::Config("missing [simplex]".into()))?;
    let seed = config.seeds.first().copied().unwrap_or(0);
    let checks = simplex_suite(cfg, seed)?;
    for check in &checks {
        if let Some(report) = &check.report {
            report.write_csv(art.create(&format!("{}.csv", check.name))?)?;
            let chart = Chart {
                title: check.name.clone(),
                x_label: "k".into(),
                y_label: "value".into(),
                log_y: true,
                series: vec![
                    Series {
                        label: "measured".into(),
                        points: report
                            .rows
                            .iter()
                            .map(|r| (r.k as f64, r.lhs, 0.0))
                            .collect(),
                    },
                    Series {
                        label: "bound".into(),
                        points: report
                            .rows
                            .iter()
                            .map(|r| (r.k as f64, r.rhs_bound, 0.0))
                            .collect(),
                    },
                ],
            };
            art.text(&format!("{}.svg", check.name), &chart.to_svg())?;
        }
        out.report.verdicts.push(Verdict::new(
            &check.name,
            check.passed,
            check.detail.clone(),
        ));
    }
    out.report.checks = checks;
    Ok(())
}

type RowField = fn(&StudyRow) -> f64;

fn study(config: &ExperimentConfig, art: &mut Artifacts, out: &mut Outcome) -> Result<()> {
    let problem = Problem::build(config)?;
    let (trials, rows) = step_size_study(config, &problem)?;
    write_study(&trials, art.create("study.csv")?)?;
    let fields: [(&str, RowField); 2] = [
        ("inner_iters", |r| r.mean_inner),
        ("outer_iters", |r| r.mean_outer),
    ];
    for (name, f) in fields {
        let chart = Chart {
            title: format!("mean {} by step size", name.replace('_', " ")),
            x_label: "tau".into(),
            y_label: name.into(),
            log_y: false,
            series: vec![Series {
                label: "converged trials".into(),
                points: rows
                    .iter()
                    .filter(|r| !f(r).is_nan())
                    .map(|r| (r.tau, f(r), 0.0))
                    .collect(),
            }],
        };
        art.text(&format!("{name}.svg"), &chart.to_svg())?;
    }

    let converged: Vec<&StudyRow> = rows.iter().filter(|r| !r.is_flagged()).collect();
    let inner: Vec<f64> = converged.iter().map(|r| r.mean_inner).collect();
    let outer: Vec<f64> = converged.iter().map(|r| r.mean_outer).collect();
    let flagged: Vec<f64> = rows
        .iter()
        .filter(|r| r.is_flagged())
        .map(|r| r.tau)
        .collect();
    let mut taus: Vec<f64> = rows.iter().map(|r| r.tau).collect();
    taus.sort_by(f64::total_cmp);
    let median = taus.get(taus.len() / 2).copied().unwrap_or(f64::INFINITY);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.1}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    out.report.verdicts.push(Verdict::new(
        "inner-nondecreasing",
        converged.len() >= 2 && is_monotone(&inner, 1.0),
        format!(
            "mean inner iterations over converged tau: [{}]",
            fmt(&inner)
        ),
    ));
    out.report.verdicts.push(Verdict::new(
        "outer-nonincreasing",
        converged.len() >= 2 && is_monotone(&outer, -1.0),
        format!(
            "mean outer iterations over converged tau: [{}]",
            fmt(&outer)
        ),
    ));
    out.report.verdicts.push(Verdict::new(
        "large-step-flagged",
        flagged.iter().any(|t| *t >= median),
        format!(
            "tau with a flagged inner non-convergence: [{}] (large means tau >= {median})",
            fmt(&flagged)
        ),
    ));
    out.report.study = rows;
    out.study = trials;
    Ok(())
}

fn trials(
    command: Command,
    config: &ExperimentConfig,
    art: &mut Artifacts,
    out: &mut Outcome,
) -> Result<()> {
    let methods: Vec<Method> = match command {
        Command::Run => config.methods.iter().take(1).copied().collect(),
        _ => config.methods.clone(),
    };
    if methods.is_empty() {
        return Err(Error::Config("no methods to run".into()));
    }
    out.report.methods = methods.iter().map(|m| m.as_str().to_owned()).collect();
    let problem = Problem::build(config)?;
    let reference = gap_reference(config, &problem)?;
    if let Some(r) = reference {
        out.report
            .notes
            .push(format!("gap reference objective value {r:.6}"));
    }
    let nested = methods.len() > 1;
    let dir = art.dir.clone();
    let jobs: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|&m| config.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let runs: Vec<MethodRun> = jobs
        .par_iter()
        .map(|&(method, seed)| -> Result<MethodRun> {
            let t = Instant::now();
            let run = run_method(config, &problem, method, seed, config.solver(), reference)?;
            info!(
                "{} seed {seed} finished in {:.1}s",
                method.as_str(),
                t.elapsed().as_secs_f64()
            );
            let prefix = if nested {
                format!("{}/", method.as_str())
            } else {
                String::new()
            };
            fs::create_dir_all(dir.join(&prefix))?;
            write_joined(
                std::slice::from_ref(&run.series),
                File::create(dir.join(format!("{prefix}trial_{seed}.csv")))?,
            )?;
            if !run.records.is_empty() {
                write_records(
                    &run.records,
                    File::create(dir.join(format!("{prefix}records_{seed}.csv")))?,
                )?;
            }
            Ok(run)
        })
        .collect::<Result<_>>()?;
    for &(method, seed) in &jobs {
        let prefix = if nested {
            format!("{}/", method.as_str())
        } else {
            String::new()
        };
        art.written.push(format!("{prefix}trial_{seed}.csv"));
        if runs
            .iter()
            .any(|r| r.series.method == method && r.series.seed == seed && !r.records.is_empty())
        {
            art.written.push(format!("{prefix}records_{seed}.csv"));
        }
    }
    for run in &runs {
        for note in &run.notes {
            out.report.notes.push(format!(
                "{} seed {}: {note}",
                run.series.method.as_str(),
                run.series.seed
            ));
        }
        if !run.failures.is_empty() {
            out.report.notes.push(format!(
                "{} seed {}: inner threshold missed at outer iterations {:?}",
                run.series.method.as_str(),
                run.series.seed,
                run.failures
            ));
        }
    }

    let series: Vec<_> = runs.iter().map(|r| r.series.clone()).collect();
    write_joined(&series, art.create("series.csv")?)?;
    let rows = aggregate(&series);
    write_aggregate(&rows, art.create("aggregate.csv")?)?;
    let metrics: std::collections::BTreeSet<&str> =
        rows.iter().map(|r| r.metric.as_str()).collect();
    for metric in metrics {
        let chart = Chart {
            title: metric.replace('_', " "),
            x_label: "outer iteration k".into(),
            y_label: metric.into(),
            log_y: matches!(metric, "nll_gap" | "w1" | "fv_var"),
            series: methods
                .iter()
                .map(|&m| Series {
                    label: m.as_str().into(),
                    points: mean_series(&rows, m, metric)
                        .into_iter()
                        .map(|(k, a, b)| (k as f64, a, b))
                        .collect(),
                })
                .filter(|s| !s.points.is_empty())
                .collect(),
        };
        art.text(&format!("{metric}.svg"), &chart.to_svg())?;
    }
    if config.kind == ExperimentKind::DistillStudy {
        write_distillations(&runs, art.create("distillations.csv")?)?;
    }

    for &m in &methods {
        for metric in ["loss", "nll_gap", "kl", "w1"] {
            if let Some(t) = terminal(&runs, m, metric) {
                out.report.terminal.push(t);
            }
        }
    }
    out.report.verdicts = verdicts(config, &methods, &runs, &rows, &out.report.terminal);
    out.runs = runs;
    out.aggregate = rows;
    Ok(())
}

/// Mean and standard error of the last recorded value of `metric` per trial.
pub fn terminal(runs: &[MethodRun], method: Method, metric: &str) -> Option<Terminal> {
    let values: Vec<f64> = runs
        .iter()
        .filter(|r| r.series.method == method)
        .filter_map(|r| r.series.last(metric))
        .collect();
    if values.is_empty() {
        return None;
    }
    let (mean, stderr) = mean_stderr(&values);
    Some(Terminal {
        method: method.as_str().to_owned(),
        metric: metric.to_owned(),
        mean,
        stderr,
        trials: values.len(),
    })
}

fn find<'a>(terminal: &'a [Terminal], method: Method, metric: &str) -> Option<&'a Terminal> {
    terminal
        .iter()
        .find(|t| t.method == method.as_str() && t.metric == metric)
}

fn verdicts(
    config: &ExperimentConfig,
    methods: &[Method],
    runs: &[MethodRun],
    rows: &[AggregateRow],
    terminal: &[Terminal],
) -> Vec<Verdict> {
    let Some(vc) = &config.verdicts else {
        return Vec::new();
    };
    let has = |m: Method| methods.contains(&m);
    let mut out = Vec::new();
    match config.kind {
        ExperimentKind::NpmleLocation | ExperimentKind::NpmleLocationScale => {
            if has(Method::Iklpd) {
                let trials = config.seeds.len();
                let gap: Vec<(usize, f64)> = mean_series(rows, Method::Iklpd, "nll_gap")
                    .into_iter()
                    .filter(|&(k, _, _)| {
                        rows.iter()
                            .any(|r| r.k == k && r.metric == "nll_gap" && r.trials == trials)
                    })
                    .map(|(k, m, _)| (k, m))
                    .collect();
                let tail = &gap[gap.len().saturating_sub(vc.trend_window)..];
                let values: Vec<f64> = tail.iter().map(|p| p.1).collect();
                let ok = tail.len() == vc.trend_window
                    && is_monotone(&values, -1.0)
                    && values.last() < values.first();
                out.push(Verdict::new(
                    "gap-decreasing",
                    ok,
                    format!(
                        "mean NLL gap over the last {} outer iterations: [{}]",
                        tail.len(),
                        values
                            .iter()
                            .map(|v| format!("{v:.3e}"))
                            .collect::<Vec<_>>()
                            .join(", ")
                    ),
                ));
            }
            if has(Method::KwGrid) && has(Method::Iklpd) {
                if let (Some(kw), Some(fl)) = (
                    find(terminal, Method::KwGrid, "loss"),
                    find(terminal, Method::Iklpd, "loss"),
                ) {
                    out.push(Verdict::new(
                        "grid-bias",
                        kw.mean > fl.mean,
                        format!(
                            "terminal loss: fixed grid {:.5}, flow {:.5} ± {:.5}",
                            kw.mean, fl.mean, fl.stderr
                        ),
                    ));
                }
            }
        }
        ExperimentKind::BayesSampling => {
            let fl = find(terminal, Method::Iklpd, "w1");
            let la = find(terminal, Method::Langevin, "w1");
            match (vc.w1_threshold, fl, la) {
                (Some(th), Some(fl), _) => out.push(Verdict::new(
                    "w1-threshold",
                    fl.mean < th,
                    format!(
                        "terminal W1 {:.4} ± {:.4} (threshold {th}){}",
                        fl.mean,
                        fl.stderr,
                        la.map_or(String::new(), |l| format!(
                            "; langevin {:.4} ± {:.4}",
                            l.mean, l.stderr
                        ))
                    ),
                )),
                (None, Some(fl), Some(la)) => out.push(Verdict::new(
                    "beats-langevin",
                    fl.mean < la.mean,
                    format!(
                        "terminal W1: flow {:.4} ± {:.4}, langevin {:.4} ± {:.4}",
                        fl.mean, fl.stderr, la.mean, la.stderr
                    ),
                )),
                _ => {}
            }
        }
        ExperimentKind::DistillStudy => {
            if let (Some(co), Some(re)) = (
                find(terminal, Method::IklpdComposed, "loss"),
                find(terminal, Method::Iklpd, "loss"),
            ) {
                let rel = (co.mean - re.mean).abs() / re.mean.abs();
                let gaps = match (
                    find(terminal, Method::IklpdComposed, "nll_gap"),
                    find(terminal, Method::Iklpd, "nll_gap"),
                ) {
                    (Some(a), Some(b)) => {
                        format!("; terminal NLL gap ratio {:.3}", a.mean / b.mean)
                    }
                    _ => String::new(),
                };
                out.push(Verdict::new(
                    "composed-matches-retrain",
                    rel <= vc.loss_rel_tol,
                    format!(
                        "terminal loss: composed {:.5}, retrained {:.5}, relative difference {:.4} (tolerance {}){gaps}",
                        co.mean, re.mean, rel, vc.loss_rel_tol
                    ),
                ));
                let events: Vec<_> = runs
                    .iter()
                    .filter(|r| r.series.method == Method::IklpdComposed)
                    .flat_map(|r| &r.distillations)
                    .collect();
                let reached = events.iter().filter(|e| e.reached_tol).count();
                out.push(Verdict::new(
                    "distillations-completed",
                    !events.is_empty(),
                    format!(
                        "{} compressions ran; {reached} reached the tolerance, {} were flagged and kept",
                        events.len(),
                        events.len() - reached
                    ),
                ));
            }
        }
        ExperimentKind::SimplexVerify | ExperimentKind::StepSizeStudy => {}
    }
    out
}
