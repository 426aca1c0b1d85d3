//! Expanding a short TOML file into a full experiment and running it
//! through the harness, which writes CSV, SVG and a JSON report.
//!
//! Run with `cargo run --release --example experiment_config`.

use klflow::harness::{execute, Command, ExperimentConfig};

const CONFIG: &str = r#"
kind = "npmle-location"
profile = "desk"
seeds = [1, 2]
methods = ["iklpd", "kw-grid"]

[data]
n = 200

[solver]
outer_iters = 5
particles = 300

[model]
blocks = 4
width = 32

[grid]
steps = 5
"#;

fn main() -> klflow::Result<()> {
    let mut config = ExperimentConfig::from_toml_str(CONFIG, None)?;
    config.out_dir = std::env::temp_dir().join("klflow-example");
    if let Some(m) = config.metrics.as_mut() {
        m.reference_outer_factor = 2;
    }
    println!("{}", config.to_toml()?);
    let outcome = execute(Command::Compare, &config)?;
    for t in &outcome.report.terminal {
        println!("{} {}: {:.5} ± {:.5}", t.method, t.metric, t.mean, t.stderr);
    }
    println!(
        "artifacts in {}: {:?}",
        config.out_dir.display(),
        outcome.report.artifacts
    );
    Ok(())
}
