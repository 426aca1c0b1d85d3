use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use klflow::harness::{execute, Command, ExperimentConfig, Profile};

#[derive(Parser)]
#[command(
    name = "klflow",
    version,
    about = "Implicit KL proximal descent experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the first configured method over the seeds.
    Run(Opts),
    /// Run every configured method on shared data.
    Compare(Opts),
    /// Run the experiment and exit nonzero if a verdict fails.
    Verify(Opts),
    /// Run a step-size or distillation study.
    Study(Opts),
}

#[derive(Args)]
struct Opts {
    /// Experiment TOML file.
    config: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `paper` or `desk`; overrides the file.
    #[arg(long)]
    profile: Option<String>,
    /// Worker threads for independent trials.
    #[arg(long, env = "KLFLOW_THREADS")]
    threads: Option<usize>,
    /// Abort a trial at the first inner non-convergence.
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (command, opts) = match cli.command {
        Cmd::Run(o) => (Command::Run, o),
        Cmd::Compare(o) => (Command::Compare, o),
        Cmd::Verify(o) => (Command::Verify, o),
        Cmd::Study(o) => (Command::Study, o),
    };
    match run(command, opts) {
        Ok(passed) if passed || command != Command::Verify => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command, opts: Opts) -> klflow::Result<bool> {
    if let Some(n) = opts.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| klflow::Error::Config(e.to_string()))?;
    }
    let profile = opts.profile.as_deref().map(Profile::parse).transpose()?;
    let mut config = ExperimentConfig::load(&opts.config, profile)?;
    if let Some(seed) = opts.seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = opts.out {
        config.out_dir = out;
    }
    if opts.strict {
        if let Some(s) = config.solver.as_mut() {
            s.strict = true;
        }
    }
    let outcome = execute(command, &config)?;
    let report = &outcome.report;
    for v in &report.verdicts {
        println!(
            "{} {}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
    }
    for t in &report.terminal {
        println!(
            "terminal {} {}: {:.6} ± {:.6} ({} trials)",
            t.method, t.metric, t.mean, t.stderr, t.trials
        );
    }
    println!(
        "wrote {} files to {} in {:.1}s",
        report.artifacts.len(),
        config.out_dir.display(),
        report.seconds
    );
    Ok(report.passed)
}
