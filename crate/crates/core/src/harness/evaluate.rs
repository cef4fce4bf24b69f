use crate::env2d::Env2d;
use crate::error::Result;
use crate::harness::collect::{collect, ActionMode, BatchKey, EpisodeSpec};
use crate::harness::metrics::EvalMetrics;
use crate::policy::PolicyParams;
use crate::rng::tag;

/// Roll the mean policy without the safety filter for `steps` steps.
///
/// Evaluation draws from its own `(seed, EVAL, epoch)` streams and never
/// touches the training streams.
pub fn evaluate(
    env: &Env2d,
    policy: &PolicyParams,
    d_min: f64,
    seed: u64,
    epoch: usize,
    steps: usize,
    horizon: usize,
) -> Result<EvalMetrics> {
    let spec = EpisodeSpec {
        env,
        policy,
        filter: None,
        mode: ActionMode::Mean,
        d_min,
        record_states: false,
    };
    let key = BatchKey {
        seed,
        purpose: tag::EVAL,
        epoch: epoch as u64,
    };
    let batch = collect(&spec, key, steps, horizon, 1)?;
    Ok(EvalMetrics {
        j_r: batch.episode_mean(|e| e.total_reward()),
        m_c: batch.episode_mean(|e| e.total_env_cost()),
        cost_rate: batch.stats.env_cost / batch.stats.steps as f64,
        steps: batch.stats.steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algos::{AlgoConfig, Algorithm, Learner};
    use crate::env2d::LayoutConfig;

    #[test]
    fn evaluation_is_reproducible() {
        let env = Env2d::new(LayoutConfig::default()).unwrap();
        let mut cfg = AlgoConfig::new(Algorithm::Trpo, 1);
        cfg.hidden = vec![8];
        let l = Learner::new(&cfg, 1).unwrap();
        let a = evaluate(&env, &l.policy, 0.75, 5, 2, 600, 200).unwrap();
        let b = evaluate(&env, &l.policy, 0.75, 5, 2, 600, 200).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps, 600);
        assert!(a.cost_rate >= 0.0);
    }
}
