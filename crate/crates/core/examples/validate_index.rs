//! Check that the default safety index always leaves a safe action, then
//! show a deliberately weak index failing the same check.

use s3po::env2d::LayoutConfig;
use s3po::safety::{validate_index, SafetyIndexParams};

fn main() -> s3po::Result<()> {
    let layout = LayoutConfig::default();
    let good = validate_index(&SafetyIndexParams::default(), &layout, 600)?;
    println!(
        "default index: {}/{} feasible, worst margin {:.2e}, passed = {}",
        good.n_feasible, good.n_samples, good.worst_margin, good.passed
    );
    let weak = SafetyIndexParams::new(2, 0.01, 0.05, 0.001, 0.75)?;
    let bad = validate_index(&weak, &layout, 600)?;
    println!(
        "k = 0.01: {}/{} feasible, {} counterexamples kept, passed = {}",
        bad.n_feasible,
        bad.n_samples,
        bad.counterexamples.len(),
        bad.passed
    );
    Ok(())
}
