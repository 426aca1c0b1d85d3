//! End-to-end acceptance criteria A1 to A11, each at its stated tolerance
//! and runtime budget. Every criterion writes one PASS/FAIL line to stderr;
//! run with `cargo test --release --test acceptance` to see them.

mod common;

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::{density_mass_2d, numerical_logdet, random_flow, subproblem_gradient_error};
use klflow::baselines::{mixture_data_gen, MixingSpec, TwoMoonsSpec};
use klflow::harness::config::SimplexConfig;
use klflow::harness::{
    execute, simplex_suite, CheckOutcome, Command, ExperimentConfig, ExperimentKind, Profile,
};
use klflow::{KlTarget, LikelihoodKernel, Npmle, PotentialTarget};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Line {
    id: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

impl Line {
    fn ok(&self) -> bool {
        self.passed && self.elapsed <= self.budget
    }
}

fn report(line: &Line) {
    let _ = writeln!(
        std::io::stderr(),
        "{} {} [{:.1}s of {:.0}s] {}",
        line.id,
        if line.ok() { "PASS" } else { "FAIL" },
        line.elapsed.as_secs_f64(),
        line.budget.as_secs_f64(),
        line.detail
    );
}

fn out_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance")
        .join(name)
}

fn suite_line(id: &'static str, checks: &[&CheckOutcome], budget: u64) -> Line {
    Line {
        id,
        passed: checks.iter().all(|c| c.passed),
        detail: checks
            .iter()
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect::<Vec<_>>()
            .join(" | "),
        elapsed: Duration::from_secs_f64(checks.iter().map(|c| c.seconds).sum()),
        budget: Duration::from_secs(budget),
    }
}

fn experiment(id: &'static str, config: ExperimentConfig, command: Command, budget: u64) -> Line {
    let start = Instant::now();
    let (passed, detail) = match execute(command, &config) {
        Ok(out) => (
            !out.report.verdicts.is_empty() && out.report.passed,
            out.report
                .verdicts
                .iter()
                .map(|v| {
                    format!(
                        "{} {}: {}",
                        if v.passed { "ok" } else { "failed" },
                        v.name,
                        v.detail
                    )
                })
                .collect::<Vec<_>>()
                .join(" | "),
        ),
        Err(e) => (false, format!("error: {e}")),
    };
    Line {
        id,
        passed,
        detail,
        elapsed: start.elapsed(),
        budget: Duration::from_secs(budget),
    }
}

fn desk(kind: ExperimentKind, alpha: f64, name: &str) -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(kind, Profile::Desk, alpha);
    c.out_dir = out_dir(name);
    c
}

fn flow_suite() -> Line {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut passed = true;

    let flow = random_flow(3, 10, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = flow.sample(1000, &mut rng).unwrap();
    let round_trip = flow.inverse(&p.theta).unwrap().sup_dist(&p.base);
    passed &= round_trip < 1e-6;
    notes.push(format!("round trip {round_trip:.1e}"));

    let mut worst_ld: f64 = 0.0;
    for dim in 1..=4 {
        let flow = random_flow(dim, 6, 10 + dim as u64);
        let x = flow.base().sample(20, &mut rng);
        let (_, logdet) = flow.forward(&x).unwrap();
        for (i, ld) in logdet.iter().enumerate() {
            worst_ld = worst_ld.max((numerical_logdet(&flow, x.row_slice(i)) - ld).abs());
        }
    }
    passed &= worst_ld < 1e-5;
    notes.push(format!("logdet error {worst_ld:.1e}"));

    let mut worst_grad: f64 = 0.0;
    let mut data_rng = ChaCha8Rng::seed_from_u64(3);
    let moons = MixingSpec::TwoMoons(TwoMoonsSpec::default());
    for (kernel, dim) in [
        (LikelihoodKernel::GaussianLocation, 2),
        (LikelihoodKernel::GaussianLocationScale, 4),
    ] {
        let (data, _) = mixture_data_gen(&moons, kernel, 50, &mut data_rng).unwrap();
        let npmle = Npmle::new(data, kernel);
        worst_grad = worst_grad.max(subproblem_gradient_error(&npmle, dim, 2.0, 20 + dim as u64));
        worst_grad = worst_grad.max(subproblem_gradient_error(
            &npmle,
            dim,
            f64::INFINITY,
            30 + dim as u64,
        ));
    }
    for alpha in [1.0, 2.0, 3.0] {
        let target = KlTarget::new(PotentialTarget::new(alpha).unwrap(), 2).unwrap();
        worst_grad = worst_grad.max(subproblem_gradient_error(
            &target,
            2,
            5.0,
            40 + alpha as u64,
        ));
    }
    passed &= worst_grad < 1e-4;
    notes.push(format!("gradient relative error {worst_grad:.1e}"));

    let mass = density_mass_2d(&random_flow(2, 6, 50), 9.0, 301);
    passed &= (mass - 1.0).abs() < 1e-2;
    notes.push(format!("density mass {mass:.5}"));

    Line {
        id: "A7",
        passed,
        detail: notes.join(", "),
        elapsed: start.elapsed(),
        budget: Duration::from_secs(120),
    }
}

#[test]
fn acceptance_criteria() {
    let mut lines = Vec::new();

    let checks = simplex_suite(&SimplexConfig::default(), 7).expect("grid checks run");
    let by_name = |n: &str| checks.iter().find(|c| c.name == n).expect("check present");
    for (id, names, budget) in [
        ("A1", vec!["contraction"], 1),
        ("A2", vec!["sublinear"], 30),
        ("A3", vec!["continuous-flow"], 10),
        ("A4", vec!["inexact-geometric", "inexact-polynomial"], 10),
        ("A5", vec!["stochastic"], 120),
        ("A6", vec!["three-point"], 10),
    ] {
        let picked: Vec<&CheckOutcome> = names.iter().map(|n| by_name(n)).collect();
        lines.push(suite_line(id, &picked, budget));
        report(lines.last().unwrap());
    }

    lines.push(flow_suite());
    report(lines.last().unwrap());

    let start = Instant::now();
    let a2 = experiment(
        "A8",
        desk(ExperimentKind::BayesSampling, 2.0, "a8-alpha2"),
        Command::Compare,
        900,
    );
    let a3 = experiment(
        "A8",
        desk(ExperimentKind::BayesSampling, 3.0, "a8-alpha3"),
        Command::Compare,
        900,
    );
    lines.push(Line {
        id: "A8",
        passed: a2.passed && a3.passed,
        detail: format!("alpha=2: {} || alpha=3: {}", a2.detail, a3.detail),
        elapsed: start.elapsed(),
        budget: Duration::from_secs(900),
    });
    report(lines.last().unwrap());

    lines.push(experiment(
        "A9",
        desk(ExperimentKind::NpmleLocationScale, 2.0, "a9"),
        Command::Verify,
        1200,
    ));
    report(lines.last().unwrap());
    lines.push(experiment(
        "A10",
        desk(ExperimentKind::DistillStudy, 2.0, "a10"),
        Command::Study,
        1200,
    ));
    report(lines.last().unwrap());
    lines.push(experiment(
        "A11",
        desk(ExperimentKind::StepSizeStudy, 2.0, "a11"),
        Command::Study,
        1800,
    ));
    report(lines.last().unwrap());

    let failed: Vec<&str> = lines.iter().filter(|l| !l.ok()).map(|l| l.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
