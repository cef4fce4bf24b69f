//! Turn the imaginary costs of a filtered rollout into running maxima,
//! increments and cost-value targets.

use s3po::algos::{AlgoConfig, Algorithm, Learner};
use s3po::env2d::{Env2d, LayoutConfig};
use s3po::harness::{run_episode, ActionMode, EpisodeSpec, Filter};
use s3po::mmdp::{augment, cost_value_targets, CostSignal};
use s3po::rng;
use s3po::safety::{ProjectionBudget, SafetyIndexParams};

fn main() -> s3po::Result<()> {
    let env = Env2d::new(LayoutConfig::default())?;
    let learner = Learner::new(&AlgoConfig::new(Algorithm::S3po, 1), 0)?;
    let (index, budget) = (SafetyIndexParams::default(), ProjectionBudget::default());
    let spec = EpisodeSpec {
        env: &env,
        policy: &learner.policy,
        filter: Some(Filter { index: &index, budget: &budget }),
        mode: ActionMode::Sample,
        d_min: index.d_min(),
        record_states: false,
    };
    // find an episode in which the filter fires
    for seed in 0..50 {
        let ep = run_episode(&spec, seed, 250, 250, &mut rng::stream(seed, &[]))?;
        if ep.stats.triggers == 0 {
            continue;
        }
        let aug = augment(&ep.trajectory, CostSignal::ImaginaryCost)?;
        let targets = cost_value_targets(&aug);
        println!("episode {seed}: {} triggers", ep.stats.triggers);
        println!("   t   delta_phi   M_t        D_t        V_D target");
        for (t, s) in aug.steps.iter().enumerate().filter(|(_, s)| s.delta_phi > 0.0).take(8) {
            println!("{t:4}   {:.6}   {:.6}   {:.6}   {:.6}", s.delta_phi, s.running_max, s.increment, targets[t]);
        }
        let sum_d: f64 = aug.steps.iter().map(|s| s.increment).sum();
        let max_dphi = aug.steps.iter().map(|s| s.delta_phi).fold(0.0, f64::max);
        println!("sum of increments {sum_d:.6} equals the maximum imaginary cost {max_dphi:.6}");
        return Ok(());
    }
    println!("no episode triggered the filter");
    Ok(())
}
