//! Every grid-level convergence check with its default settings: geometric
//! contraction, the sublinear envelope, the continuous-time flow, inexact
//! and stochastic steps, and the three-point inequality.
//!
//! Run with `cargo run --release --example simplex_suite`.

use klflow::harness::config::SimplexConfig;
use klflow::harness::simplex_suite;

fn main() -> klflow::Result<()> {
    for check in simplex_suite(&SimplexConfig::default(), 7)? {
        println!(
            "{} {:18} {:6.2}s  {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.seconds,
            check.detail
        );
    }
    Ok(())
}
