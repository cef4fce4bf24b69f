//! Roll one policy with and without the filter from the same seeds and
//! compare the trajectories.

use s3po::algos::{AlgoConfig, Algorithm, Learner};
use s3po::env2d::{Env2d, LayoutConfig};
use s3po::harness::lemma1_check;
use s3po::safety::{ProjectionBudget, SafetyIndexParams};

fn main() -> s3po::Result<()> {
    let env = Env2d::new(LayoutConfig::default())?;
    let learner = Learner::new(&AlgoConfig::new(Algorithm::S3po, 1), 4)?;
    let r = lemma1_check(&env, &learner.policy, &SafetyIndexParams::default(), &ProjectionBudget::default(), 4, 40, 250, 0.0)?;
    println!("untriggered rollouts: {} / {}", r.n_untriggered, r.n_rollouts);
    println!("  identical and inside phi <= 0: {}", r.n_untriggered_identical_safe);
    println!("unfiltered rollouts inside phi <= 0: {} (matched {})", r.n_eval_safe, r.n_eval_safe_matched);
    for p in r.rollouts.iter().filter(|p| p.triggered).take(3) {
        println!(
            "  rollout {} first triggered at step {:?}, diverged at {:?}",
            p.index, p.first_trigger_step, p.divergence_step
        );
    }
    println!("forward holds: {}, reverse holds: {}", r.forward_holds, r.reverse_holds);
    Ok(())
}
