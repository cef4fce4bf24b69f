//! Maximum-MDP augmentation.
//!
//! Each state is augmented with the running maximum `M` of the state-wise
//! cost seen so far in the episode, and each transition pays only the
//! increment `D = max(cost - M, 0)`. The undiscounted sum of increments over
//! an episode is then exactly the episode's maximum cost.

use serde::{Deserialize, Serialize};

use crate::env2d::{Action, Observation, ACTION_DIM};
use crate::error::{Error, Result};

/// One environment step as logged by the rollout loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTransition {
    pub observation: Observation,
    /// Sampled action before clamping; the policy density is evaluated here.
    pub raw_action: [f64; ACTION_DIM],
    /// Nominal action proposed by the policy (clamped `raw_action`).
    pub action: Action,
    /// Action actually executed after the safety filter.
    pub applied_action: Action,
    pub reward: f64,
    /// Imaginary cost; `None` when the rollout ran without a filter.
    pub delta_phi: Option<f64>,
    pub env_cost: f64,
    pub triggered: bool,
    pub next_observation: Observation,
}

/// Which per-step signal plays the role of the state-wise cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostSignal {
    ImaginaryCost,
    EnvCost,
}

/// A contiguous piece of one episode. `complete` is true when the episode
/// ran to its horizon; false when the batch ended first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub steps: Vec<T>,
    pub complete: bool,
}

impl<T> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedTransition {
    pub observation: Observation,
    pub running_max: f64,
    pub raw_action: [f64; ACTION_DIM],
    pub action: Action,
    pub reward: f64,
    /// The state-wise cost signal fed to the augmentation (imaginary cost or
    /// environment cost, depending on the channel).
    pub delta_phi: f64,
    pub increment: f64,
    pub next_observation: Observation,
    pub next_running_max: f64,
    pub env_cost: f64,
    pub triggered: bool,
    pub done: bool,
}

pub fn augment(
    trajectory: &Trajectory<RawTransition>,
    signal: CostSignal,
) -> Result<Trajectory<AugmentedTransition>> {
    let mut running_max = 0.0f64;
    let last = trajectory.steps.len().saturating_sub(1);
    let mut steps = Vec::with_capacity(trajectory.steps.len());
    for (t, raw) in trajectory.steps.iter().enumerate() {
        let cost = match signal {
            CostSignal::ImaginaryCost => raw.delta_phi.ok_or_else(|| {
                Error::Contract(format!("step {t} carries no imaginary cost (filter disabled)"))
            })?,
            CostSignal::EnvCost => raw.env_cost,
        };
        if !(cost >= 0.0) {
            return Err(Error::Contract(format!("step {t}: negative or NaN cost {cost}")));
        }
        let next_running_max = running_max.max(cost);
        let increment = next_running_max - running_max;
        steps.push(AugmentedTransition {
            observation: raw.observation.clone(),
            running_max,
            raw_action: raw.raw_action,
            action: raw.action,
            reward: raw.reward,
            delta_phi: cost,
            increment,
            next_observation: raw.next_observation.clone(),
            next_running_max,
            env_cost: raw.env_cost,
            triggered: raw.triggered,
            done: t == last,
        });
        running_max = next_running_max;
    }
    Ok(Trajectory {
        steps,
        complete: trajectory.complete,
    })
}

/// Mean over episodes of the summed increments. Only complete episodes count
/// unless the batch holds none.
pub fn d_return(trajectories: &[Trajectory<AugmentedTransition>]) -> f64 {
    episode_mean(trajectories, |t| t.steps.iter().map(|s| s.increment).sum())
}

pub(crate) fn episode_mean<T>(trajectories: &[Trajectory<T>], f: impl Fn(&Trajectory<T>) -> f64) -> f64 {
    let complete: Vec<&Trajectory<T>> = trajectories.iter().filter(|t| t.complete).collect();
    let pool: Vec<&Trajectory<T>> = if complete.is_empty() {
        trajectories.iter().filter(|t| !t.is_empty()).collect()
    } else {
        complete
    };
    if pool.is_empty() {
        return 0.0;
    }
    pool.iter().map(|t| f(t)).sum::<f64>() / pool.len() as f64
}

/// Suffix sums of the increments: the largest future excess over the running
/// maximum. Non-increasing along the trajectory.
pub fn cost_value_targets(trajectory: &Trajectory<AugmentedTransition>) -> Vec<f64> {
    suffix_sums(trajectory.steps.iter().map(|s| s.increment), 0.0)
}

fn suffix_sums(values: impl DoubleEndedIterator<Item = f64> + ExactSizeIterator, tail: f64) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    let mut acc = tail;
    for (i, v) in values.enumerate().rev() {
        acc += v;
        out[i] = acc;
    }
    out
}

/// Generalized advantage estimation over one trajectory.
///
/// `values` holds `V(s_0) .. V(s_{T-1})` followed by the bootstrap value of
/// the final successor, so it is one longer than `signal`.
pub fn gae(signal: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(values.len(), signal.len() + 1, "values must include the bootstrap");
    let mut adv = vec![0.0; signal.len()];
    let mut acc = 0.0;
    for t in (0..signal.len()).rev() {
        let delta = signal[t] + gamma * values[t + 1] - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    adv
}

/// Discounted reward-to-go with a bootstrap tail value.
pub fn discounted_returns(signal: &[f64], tail: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; signal.len()];
    let mut acc = tail;
    for t in (0..signal.len()).rev() {
        acc = signal[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageBatch {
    /// Normalized to zero mean and unit variance.
    pub reward_advantages: Vec<f64>,
    /// Mean-centred only; magnitudes stay in cost units.
    pub cost_advantages: Vec<f64>,
    pub reward_value_targets: Vec<f64>,
    pub cost_value_targets: Vec<f64>,
    pub d_return: f64,
    pub epsilon_d: f64,
}

/// Advantage estimation for the reward and increment channels.
///
/// `value_fn` and `cost_value_fn` return, for a trajectory, the predictions
/// for every step plus one bootstrap prediction for the final successor.
/// The reward channel always bootstraps (episodes end by time limit). The
/// increment channel is an undiscounted finite-horizon process: complete
/// episodes end with value zero, cut ones bootstrap with a non-negative tail.
pub fn advantages(
    trajectories: &[Trajectory<AugmentedTransition>],
    value_fn: impl Fn(&Trajectory<AugmentedTransition>) -> Vec<f64>,
    cost_value_fn: impl Fn(&Trajectory<AugmentedTransition>) -> Vec<f64>,
    gamma: f64,
    lambda: f64,
) -> AdvantageBatch {
    let total: usize = trajectories.iter().map(Trajectory::len).sum();
    let mut reward_adv = Vec::with_capacity(total);
    let mut cost_adv = Vec::with_capacity(total);
    let mut reward_targets = Vec::with_capacity(total);
    let mut cost_targets = Vec::with_capacity(total);

    for traj in trajectories.iter().filter(|t| !t.is_empty()) {
        let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
        let increments: Vec<f64> = traj.steps.iter().map(|s| s.increment).collect();

        let v = value_fn(traj);
        reward_adv.extend(gae(&rewards, &v, gamma, lambda));
        reward_targets.extend(discounted_returns(&rewards, v[rewards.len()], gamma));

        let mut vc = cost_value_fn(traj);
        let tail = if traj.complete { 0.0 } else { vc[increments.len()].max(0.0) };
        let n = increments.len();
        vc[n] = tail;
        cost_adv.extend(gae(&increments, &vc, 1.0, lambda));
        cost_targets.extend(suffix_sums(increments.iter().copied(), tail));
    }

    normalize(&mut reward_adv, true);
    normalize(&mut cost_adv, false);
    let epsilon_d = cost_adv.iter().fold(0.0f64, |m, a| m.max(a.abs()));

    AdvantageBatch {
        reward_advantages: reward_adv,
        cost_advantages: cost_adv,
        reward_value_targets: reward_targets,
        cost_value_targets: cost_targets,
        d_return: d_return(trajectories),
        epsilon_d,
    }
}

/// Subtract the mean; optionally divide by the (population) standard deviation.
pub fn normalize(xs: &mut [f64], unit_variance: bool) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter_mut().for_each(|x| *x -= mean);
    if unit_variance {
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n;
        let std = var.sqrt();
        if std > 1e-8 {
            xs.iter_mut().for_each(|x| *x /= std);
        }
    }
}
