//! Trajectory equivalence between the filtered training environment and
//! the unfiltered evaluation environment.
//!
//! Both rollouts start from the same reset seed and draw policy noise from
//! identical streams. If the filter never intervenes, every executed action
//! is the nominal one and the two trajectories must coincide bit for bit,
//! staying inside `phi <= 0`. Conversely, an evaluation rollout that never
//! leaves `phi <= 0` can never trigger the filter, so its training twin must
//! be untriggered and identical.

use serde::{Deserialize, Serialize};

use crate::env2d::{Env2d, EnvState};
use crate::error::Result;
use crate::harness::collect::{run_episode, ActionMode, EpisodeSpec, Filter};
use crate::mmdp::RawTransition;
use crate::policy::PolicyParams;
use crate::rng::{self, tag};
use crate::safety::{phi, ProjectionBudget, SafetyIndexParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutPair {
    pub index: usize,
    pub reset_seed: u64,
    pub triggered: bool,
    pub first_trigger_step: Option<usize>,
    pub max_delta_phi: f64,
    pub identical: bool,
    /// First state index at which the two rollouts differ.
    pub divergence_step: Option<usize>,
    pub max_phi_train: f64,
    pub max_phi_eval: f64,
    pub eval_env_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub n_rollouts: usize,
    pub horizon: usize,
    pub n_untriggered: usize,
    /// Untriggered rollouts that are identical and stay in `phi <= 0`.
    pub n_untriggered_identical_safe: usize,
    /// Evaluation rollouts that stay in `phi <= 0`.
    pub n_eval_safe: usize,
    /// Of those, how many have an untriggered, identical training twin.
    pub n_eval_safe_matched: usize,
    pub forward_holds: bool,
    pub reverse_holds: bool,
    pub min_untriggered_fraction: f64,
    pub passed: bool,
    pub rollouts: Vec<RolloutPair>,
}

fn first_difference(a: &[EnvState], b: &[EnvState]) -> Option<usize> {
    let common = a.len().min(b.len());
    (0..common).find(|&i| a[i] != b[i]).or((a.len() != b.len()).then_some(common))
}

#[allow(clippy::too_many_arguments)]
pub fn lemma1_check(
    env: &Env2d,
    policy: &PolicyParams,
    index: &SafetyIndexParams,
    budget: &ProjectionBudget,
    seed: u64,
    n_rollouts: usize,
    horizon: usize,
    min_untriggered_fraction: f64,
) -> Result<Lemma1Report> {
    let train_spec = EpisodeSpec {
        env,
        policy,
        filter: Some(Filter { index, budget }),
        mode: ActionMode::Sample,
        d_min: index.d_min(),
        record_states: true,
    };
    let eval_spec = EpisodeSpec {
        filter: None,
        ..train_spec
    };
    let mut rollouts = Vec::with_capacity(n_rollouts);
    for i in 0..n_rollouts {
        let reset_seed = rng::derive_seed(seed, &[tag::LEMMA1, i as u64]);
        let noise_path = [tag::LEMMA1, i as u64, tag::POLICY_NOISE];
        let train = run_episode(&train_spec, reset_seed, horizon, horizon, &mut rng::stream(seed, &noise_path))?;
        let eval = run_episode(&eval_spec, reset_seed, horizon, horizon, &mut rng::stream(seed, &noise_path))?;
        let steps = &train.trajectory.steps;
        let divergence_step = first_difference(&train.states, &eval.states);
        let max_phi = |states: &[EnvState]| states.iter().map(|s| phi(s, index)).fold(f64::NEG_INFINITY, f64::max);
        rollouts.push(RolloutPair {
            index: i,
            reset_seed,
            triggered: steps.iter().any(|s| s.triggered),
            first_trigger_step: steps.iter().position(|s| s.triggered),
            max_delta_phi: steps.iter().filter_map(|s| s.delta_phi).fold(0.0, f64::max),
            identical: divergence_step.is_none() && train.trajectory.steps == eval_trajectory_as_filtered(&eval.trajectory.steps, steps),
            divergence_step,
            max_phi_train: max_phi(&train.states),
            max_phi_eval: max_phi(&eval.states),
            eval_env_cost: eval.total_env_cost(),
        });
    }
    let untriggered: Vec<&RolloutPair> = rollouts.iter().filter(|r| !r.triggered).collect();
    let n_untriggered = untriggered.len();
    let n_untriggered_identical_safe = untriggered.iter().filter(|r| r.identical && r.max_phi_eval <= 0.0).count();
    let eval_safe: Vec<&RolloutPair> = rollouts.iter().filter(|r| r.max_phi_eval <= 0.0).collect();
    let n_eval_safe_matched = eval_safe.iter().filter(|r| !r.triggered && r.identical).count();
    let forward_holds = n_untriggered_identical_safe == n_untriggered;
    let reverse_holds = n_eval_safe_matched == eval_safe.len();
    let enough = n_untriggered as f64 >= min_untriggered_fraction * n_rollouts as f64;
    Ok(Lemma1Report {
        n_rollouts,
        horizon,
        n_untriggered,
        n_untriggered_identical_safe,
        n_eval_safe: eval_safe.len(),
        n_eval_safe_matched,
        forward_holds,
        reverse_holds,
        min_untriggered_fraction,
        passed: forward_holds && reverse_holds && enough,
        rollouts,
    })
}

/// The unfiltered transitions with the training-side filter bookkeeping
/// copied over, so the comparison covers observations, actions, rewards
/// and costs.
fn eval_trajectory_as_filtered(eval: &[RawTransition], train: &[RawTransition]) -> Vec<RawTransition> {
    eval.iter()
        .zip(train)
        .map(|(e, t)| RawTransition {
            delta_phi: t.delta_phi,
            triggered: t.triggered,
            ..e.clone()
        })
        .collect()
}
