//! Update drivers for S-3PO and the baselines.
//!
//! Every algorithm shares one pipeline: augment the batch with the running
//! maximum of its cost channel, estimate advantages, take one trust-region
//! step, then refit the value networks. The algorithms differ in the cost
//! channel, in whether the constraint enters the step, and in the line-search
//! acceptance rule.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::env2d::{ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::mmdp::{self, AugmentedTransition, CostSignal, RawTransition, Trajectory};
use crate::policy::{previous_targets, stack_rows, PolicyBatch, PolicyParams, ValueNet};
use crate::trpo::{self, Acceptance, Candidate, CgConfig, SolveCase, Subproblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    S3po,
    Scpo,
    Trpo,
    TrpoLagrangian,
    TrpoIssa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintChannel {
    ImaginaryCost,
    EnvCost,
    None,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::S3po,
        Algorithm::Scpo,
        Algorithm::Trpo,
        Algorithm::TrpoLagrangian,
        Algorithm::TrpoIssa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::S3po => "s3po",
            Algorithm::Scpo => "scpo",
            Algorithm::Trpo => "trpo",
            Algorithm::TrpoLagrangian => "trpo_lagrangian",
            Algorithm::TrpoIssa => "trpo_issa",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}' (expected one of s3po, scpo, trpo, trpo_lagrangian, trpo_issa)")))
    }

    pub fn filter_enabled(self) -> bool {
        matches!(self, Algorithm::S3po | Algorithm::TrpoIssa)
    }

    pub fn constraint_channel(self) -> ConstraintChannel {
        match self {
            Algorithm::S3po => ConstraintChannel::ImaginaryCost,
            Algorithm::Scpo | Algorithm::TrpoLagrangian => ConstraintChannel::EnvCost,
            Algorithm::Trpo | Algorithm::TrpoIssa => ConstraintChannel::None,
        }
    }

    /// The per-step signal tracked by the running maximum. Filtered runs
    /// always log the imaginary cost so `J_D` stays comparable across them.
    pub fn monitored_signal(self) -> CostSignal {
        if self.filter_enabled() {
            CostSignal::ImaginaryCost
        } else {
            CostSignal::EnvCost
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    pub target_cost: f64,
    pub lagrangian_lr: f64,
    /// Multiplier on the `2(H+1)·ε_D·√(δ/2)` slack term.
    pub beta: f64,
    pub k_safe: usize,
    /// Monotonicity weight of the cost-value loss.
    pub weight: f64,
    pub delta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub backtrack_coeff: f64,
    pub backtrack_iters: usize,
    pub cg: CgConfig,
    pub value_iters: usize,
    pub value_lr: f64,
    pub hidden: Vec<usize>,
}

impl AlgoConfig {
    pub fn new(algorithm: Algorithm, epochs: usize) -> Self {
        AlgoConfig {
            algorithm,
            target_cost: 0.0,
            lagrangian_lr: 0.005,
            beta: 1.0,
            k_safe: default_k_safe(epochs),
            weight: 1.0,
            delta: 0.02,
            gamma: 0.99,
            lambda: 0.97,
            backtrack_coeff: 0.8,
            backtrack_iters: 100,
            cg: CgConfig::default(),
            value_iters: 80,
            value_lr: 1e-3,
            hidden: vec![64, 64],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.delta > 0.0) {
            return fail(format!("algo.delta must be positive, got {}", self.delta));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return fail(format!("algo.beta must lie in [0, 1], got {}", self.beta));
        }
        if !(self.weight >= 0.0) {
            return fail(format!("algo.weight must be non-negative, got {}", self.weight));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return fail(format!("algo.gamma and algo.lambda must lie in [0, 1] (got {}, {})", self.gamma, self.lambda));
        }
        if !(self.backtrack_coeff > 0.0 && self.backtrack_coeff < 1.0) || self.backtrack_iters == 0 {
            return fail("algo.backtrack_coeff must lie in (0, 1) with at least one backtrack".into());
        }
        if self.cg.iters == 0 || !(self.cg.damping >= 0.0) {
            return fail("algo.cg_iters must be positive and algo.damping non-negative".into());
        }
        if !(self.lagrangian_lr >= 0.0) || !(self.value_lr > 0.0) {
            return fail("learning rates must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail(format!("algo.hidden must list positive widths, got {:?}", self.hidden));
        }
        Ok(())
    }
}

pub fn default_k_safe(epochs: usize) -> usize {
    epochs * 3 / 4
}

/// Trainable state carried across epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub policy: PolicyParams,
    pub value: ValueNet,
    /// Input is the observation followed by the running maximum.
    pub cost_value: ValueNet,
    pub lagrange: f64,
}

impl Learner {
    pub fn new(cfg: &AlgoConfig, seed: u64) -> Result<Self> {
        use crate::rng::{stream, tag};
        let policy = PolicyParams::new(OBS_DIM, &cfg.hidden, ACTION_DIM, &mut stream(seed, &[tag::INIT, 0]))?;
        let value = ValueNet::new(OBS_DIM, &cfg.hidden, cfg.value_lr, &mut stream(seed, &[tag::INIT, 1]))?;
        let cost_value = ValueNet::new(OBS_DIM + 1, &cfg.hidden, cfg.value_lr, &mut stream(seed, &[tag::INIT, 2]))?;
        Ok(Learner {
            policy,
            value,
            cost_value,
            lagrange: 0.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub case: SolveCase,
    pub accepted: bool,
    pub ls_depth: usize,
    pub kl: f64,
    pub reward_change: f64,
    pub cost_change: f64,
    pub predicted_kl: f64,
    pub lambda: f64,
    pub nu: f64,
    /// Constraint offset handed to the solver.
    pub c: f64,
    pub d_return: f64,
    pub epsilon_d: f64,
    pub slack: f64,
    pub lagrange: f64,
    pub episodic_env_cost: f64,
    pub value_loss: f64,
    pub cost_value_loss: f64,
}

pub(crate) fn features(transition: &AugmentedTransition) -> [f64; OBS_DIM] {
    transition.observation.features()
}

pub(crate) fn cost_features(obs: [f64; OBS_DIM], running_max: f64) -> [f64; OBS_DIM + 1] {
    let mut out = [0.0; OBS_DIM + 1];
    out[..OBS_DIM].copy_from_slice(&obs);
    out[OBS_DIM] = running_max;
    out
}

/// Value predictions for every step plus the final successor.
pub fn value_predictions(net: &ValueNet, traj: &Trajectory<AugmentedTransition>) -> Vec<f64> {
    let mut rows: Vec<[f64; OBS_DIM]> = traj.steps.iter().map(features).collect();
    if let Some(last) = traj.steps.last() {
        rows.push(last.next_observation.features());
    }
    net.predict(stack_rows(&rows, OBS_DIM).view())
}

pub fn cost_value_predictions(net: &ValueNet, traj: &Trajectory<AugmentedTransition>) -> Vec<f64> {
    let mut rows: Vec<[f64; OBS_DIM + 1]> = traj
        .steps
        .iter()
        .map(|s| cost_features(s.observation.features(), s.running_max))
        .collect();
    if let Some(last) = traj.steps.last() {
        rows.push(cost_features(last.next_observation.features(), last.next_running_max));
    }
    net.predict(stack_rows(&rows, OBS_DIM + 1).view())
}

/// Fraction of non-initial steps whose cost-value prediction exceeds the
/// previous step's target by more than `tol`.
pub fn monotonicity_violation_rate(net: &ValueNet, trajectories: &[Trajectory<AugmentedTransition>], tol: f64) -> f64 {
    let mut violations = 0usize;
    let mut total = 0usize;
    for traj in trajectories.iter().filter(|t| t.len() > 1) {
        let pred = cost_value_predictions(net, traj);
        let targets = mmdp::cost_value_targets(traj);
        for t in 1..traj.len() {
            total += 1;
            if pred[t] > targets[t - 1] + tol {
                violations += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        violations as f64 / total as f64
    }
}

/// Augment every trajectory with the algorithm's monitored cost signal.
pub fn augment_batch(algorithm: Algorithm, batch: &[Trajectory<RawTransition>]) -> Result<Vec<Trajectory<AugmentedTransition>>> {
    batch.iter().map(|t| mmdp::augment(t, algorithm.monitored_signal())).collect()
}

/// One policy update plus value refits for any algorithm.
pub fn update(
    cfg: &AlgoConfig,
    learner: &mut Learner,
    batch: &[Trajectory<RawTransition>],
    epoch: usize,
    horizon: usize,
) -> Result<UpdateReport> {
    let trajectories = augment_batch(cfg.algorithm, batch)?;
    let trajectories: Vec<_> = trajectories.into_iter().filter(|t| !t.is_empty()).collect();
    if trajectories.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }

    let adv = mmdp::advantages(
        &trajectories,
        |t| value_predictions(&learner.value, t),
        |t| cost_value_predictions(&learner.cost_value, t),
        cfg.gamma,
        cfg.lambda,
    );

    let steps: Vec<&AugmentedTransition> = trajectories.iter().flat_map(|t| t.steps.iter()).collect();
    let obs_rows: Vec<[f64; OBS_DIM]> = steps.iter().map(|s| features(s)).collect();
    let act_rows: Vec<[f64; ACTION_DIM]> = steps.iter().map(|s| s.raw_action).collect();
    let observations = stack_rows(&obs_rows, OBS_DIM);
    let policy_batch = PolicyBatch::new(&learner.policy, observations.clone(), stack_rows(&act_rows, ACTION_DIM));

    let episodic_env_cost = mmdp::episode_mean(&trajectories, |t| t.steps.iter().map(|s| s.env_cost).sum());

    // the objective advantages and the constraint advantages for this step
    let (objective_adv, constraint) = match cfg.algorithm {
        Algorithm::S3po | Algorithm::Scpo => {
            let slack = cfg.beta * 2.0 * (horizon as f64 + 1.0) * adv.epsilon_d * (cfg.delta / 2.0).sqrt();
            let c = adv.d_return + slack - cfg.target_cost;
            // expectation under the undiscounted visitation measure: a sum
            // over the episode, i.e. the per-step mean times the episode length
            let per_episode = steps.len() as f64 / trajectories.len() as f64;
            let cost_adv: Vec<f64> = adv.cost_advantages.iter().map(|a| a * per_episode).collect();
            (adv.reward_advantages.clone(), Some((cost_adv, c, slack)))
        }
        Algorithm::TrpoLagrangian => {
            learner.lagrange = (learner.lagrange + cfg.lagrangian_lr * (episodic_env_cost - cfg.target_cost)).max(0.0);
            let cost_adv = env_cost_advantages(&trajectories, cfg);
            let l = learner.lagrange;
            let penalized = adv
                .reward_advantages
                .iter()
                .zip(&cost_adv)
                .map(|(a, ac)| (a - l * ac) / (1.0 + l))
                .collect();
            (penalized, None)
        }
        Algorithm::Trpo | Algorithm::TrpoIssa => (adv.reward_advantages.clone(), None),
    };

    let (_, g) = learner.policy.surrogate_grad(&policy_batch, &objective_adv);
    let (b, c, slack, cost_adv) = match &constraint {
        Some((cost_adv, c, slack)) => {
            let (_, b) = learner.policy.surrogate_grad(&policy_batch, cost_adv);
            (b, *c, *slack, Some(cost_adv))
        }
        None => (vec![0.0; g.len()], -1.0, 0.0, None),
    };

    let policy = &learner.policy;
    let damping = cfg.cg.damping;
    let hvp = |v: &[f64]| policy.fisher_vector_product(&policy_batch, v, damping);
    let sp = Subproblem {
        g,
        b,
        c,
        delta: cfg.delta,
    };
    let outcome = trpo::solve_subproblem(&sp, &hvp, &cfg.cg).map_err(|e| e.at_epoch(epoch))?;

    let base_reward = policy.surrogate(&policy_batch, &objective_adv);
    let base_cost = cost_adv.map(|a| policy.surrogate(&policy_batch, a)).unwrap_or(0.0);
    let rule = match constraint {
        Some(_) => Acceptance::scheduled(cfg.delta, c, epoch, cfg.k_safe),
        None => Acceptance::reward_only(cfg.delta),
    };
    let mut evaluate = |scale: f64| {
        let step: Vec<f64> = outcome.direction.iter().map(|d| scale * d).collect();
        let cand = policy.offset(&step);
        Candidate {
            kl: cand.mean_kl(&policy_batch),
            reward_change: cand.surrogate(&policy_batch, &objective_adv) - base_reward,
            cost_change: cost_adv.map(|a| cand.surrogate(&policy_batch, a) - base_cost).unwrap_or(0.0),
        }
    };
    let ls = trpo::line_search(&mut evaluate, &rule, cfg.backtrack_coeff, cfg.backtrack_iters);
    if ls.accepted {
        let step: Vec<f64> = outcome.direction.iter().map(|d| ls.step_scale * d).collect();
        learner.policy = learner.policy.offset(&step);
    }
    let cand = ls.candidate.unwrap_or(Candidate {
        kl: 0.0,
        reward_change: 0.0,
        cost_change: 0.0,
    });

    let value_loss = learner.value.fit_mse(observations.view(), &adv.reward_value_targets, cfg.value_iters);
    let cost_value_loss = fit_cost_value(cfg, learner, &trajectories, &adv.cost_value_targets);

    Ok(UpdateReport {
        case: outcome.case,
        accepted: ls.accepted,
        ls_depth: ls.depth,
        kl: cand.kl,
        reward_change: cand.reward_change,
        cost_change: cand.cost_change,
        predicted_kl: outcome.predicted_kl,
        lambda: outcome.lambda,
        nu: outcome.nu,
        c,
        d_return: adv.d_return,
        epsilon_d: adv.epsilon_d,
        slack,
        lagrange: learner.lagrange,
        episodic_env_cost,
        value_loss,
        cost_value_loss,
    })
}

fn fit_cost_value(
    cfg: &AlgoConfig,
    learner: &mut Learner,
    trajectories: &[Trajectory<AugmentedTransition>],
    targets: &[f64],
) -> f64 {
    let rows: Vec<[f64; OBS_DIM + 1]> = trajectories
        .iter()
        .flat_map(|t| t.steps.iter())
        .map(|s| cost_features(s.observation.features(), s.running_max))
        .collect();
    let inputs: Array2<f64> = stack_rows(&rows, OBS_DIM + 1);
    let mut per_episode = Vec::with_capacity(trajectories.len());
    let mut offset = 0;
    for t in trajectories {
        per_episode.push(targets[offset..offset + t.len()].to_vec());
        offset += t.len();
    }
    let prev = previous_targets(&per_episode);
    let w = if cfg.algorithm == Algorithm::S3po { cfg.weight } else { 0.0 };
    learner.cost_value.fit(inputs.view(), targets, &prev, w, cfg.value_iters)
}

/// Mean-centred advantages of the raw environment cost: the reward-channel
/// estimator settings with a zero baseline.
fn env_cost_advantages(trajectories: &[Trajectory<AugmentedTransition>], cfg: &AlgoConfig) -> Vec<f64> {
    let mut out = Vec::new();
    for t in trajectories {
        let costs: Vec<f64> = t.steps.iter().map(|s| s.env_cost).collect();
        out.extend(mmdp::gae(&costs, &vec![0.0; costs.len() + 1], cfg.gamma, cfg.lambda));
    }
    mmdp::normalize(&mut out, false);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env2d::{Action, Observation, LIDAR_BINS};

    fn obs(k: usize) -> Observation {
        let a = k as f64 * 0.37;
        Observation {
            goal_compass: [a.cos(), a.sin()],
            goal_distance: 1.0 + 0.01 * k as f64,
            velocity_ego: [0.1 * (a * 2.0).sin(), 0.0],
            hazard_lidar: [0.0; LIDAR_BINS],
            pillar_lidar: [0.0; LIDAR_BINS],
        }
    }

    fn batch(delta_phi: impl Fn(usize) -> f64, env_cost: impl Fn(usize) -> f64) -> Vec<Trajectory<RawTransition>> {
        (0..3)
            .map(|e| Trajectory {
                steps: (0..20)
                    .map(|t| {
                        let k = e * 20 + t;
                        let raw = [0.3 * (k as f64).sin(), 0.2 * (k as f64 * 1.7).cos()];
                        RawTransition {
                            observation: obs(k),
                            raw_action: raw,
                            action: Action::from_slice(&raw),
                            applied_action: Action::from_slice(&raw),
                            reward: (k as f64 * 0.9).sin() * 0.1,
                            delta_phi: Some(delta_phi(k)),
                            env_cost: env_cost(k),
                            triggered: delta_phi(k) > 0.0,
                            next_observation: obs(k + 1),
                        }
                    })
                    .collect(),
                complete: true,
            })
            .collect()
    }

    fn small_cfg(algorithm: Algorithm) -> AlgoConfig {
        let mut cfg = AlgoConfig::new(algorithm, 4);
        cfg.hidden = vec![8, 8];
        cfg.value_iters = 5;
        cfg
    }

    #[test]
    fn dispatch_flags_are_consistent() {
        for a in Algorithm::ALL {
            assert_eq!(Algorithm::parse(a.name()).unwrap(), a);
            if a.constraint_channel() == ConstraintChannel::ImaginaryCost {
                assert!(a.filter_enabled());
            }
        }
        assert!(Algorithm::parse("cpo").is_err());
    }

    #[test]
    fn s3po_matches_trpo_when_constraint_is_inactive() {
        let data = batch(|_| 0.0, |_| 0.0);
        let mut s = small_cfg(Algorithm::S3po);
        let mut t = small_cfg(Algorithm::TrpoIssa);
        s.k_safe = 0;
        t.k_safe = 0;
        let mut ls = Learner::new(&s, 3).unwrap();
        let mut lt = Learner::new(&t, 3).unwrap();
        // a zero cost-value net makes every increment advantage exactly zero
        let zeros = vec![0.0; ls.cost_value.flat().len()];
        ls.cost_value.set_flat(zeros).unwrap();
        let rs = update(&s, &mut ls, &data, 1, 20).unwrap();
        let rt = update(&t, &mut lt, &data, 1, 20).unwrap();
        assert_eq!(rs.case, SolveCase::Unconstrained);
        assert_eq!(rs.d_return, 0.0);
        assert_eq!(ls.policy.flat(), lt.policy.flat());
        assert_eq!(rs.ls_depth, rt.ls_depth);
    }

    #[test]
    fn constrained_update_respects_cost_limit() {
        let data = batch(|k| if k % 20 == 7 { 0.3 } else { 0.0 }, |_| 0.0);
        let mut cfg = small_cfg(Algorithm::S3po);
        cfg.beta = 0.0;
        let mut learner = Learner::new(&cfg, 5).unwrap();
        let before = learner.policy.clone();
        let report = update(&cfg, &mut learner, &data, 0, 20).unwrap();
        assert!(report.d_return > 0.0);
        assert!(report.c > 0.0);
        if report.accepted {
            assert!(report.cost_change <= (-report.c).max(0.0) + 1e-6);
            assert!(report.kl <= cfg.delta + 1e-6);
        } else {
            assert_eq!(learner.policy, before);
        }
    }

    #[test]
    fn updates_are_deterministic() {
        let data = batch(|k| 0.01 * (k % 5) as f64, |k| if k % 11 == 0 { 1.0 } else { 0.0 });
        for a in Algorithm::ALL {
            let cfg = small_cfg(a);
            let mut l1 = Learner::new(&cfg, 9).unwrap();
            let mut l2 = Learner::new(&cfg, 9).unwrap();
            let r1 = update(&cfg, &mut l1, &data, 2, 20).unwrap();
            let r2 = update(&cfg, &mut l2, &data, 2, 20).unwrap();
            assert_eq!(l1, l2, "{a:?}");
            assert_eq!(r1, r2, "{a:?}");
        }
    }

    #[test]
    fn lagrange_multiplier_follows_dual_ascent() {
        let cfg = small_cfg(Algorithm::TrpoLagrangian);
        let mut learner = Learner::new(&cfg, 1).unwrap();
        update(&cfg, &mut learner, &batch(|_| 0.0, |_| 0.0), 0, 20).unwrap();
        assert_eq!(learner.lagrange, 0.0);
        // each episode accumulates 2 units of cost: steps 0 and 10
        let costly = batch(|_| 0.0, |k| if k % 10 == 0 { 1.0 } else { 0.0 });
        update(&cfg, &mut learner, &costly, 1, 20).unwrap();
        assert_close!(learner.lagrange, 0.005 * 2.0, 1e-15);
        update(&cfg, &mut learner, &costly, 2, 20).unwrap();
        assert_close!(learner.lagrange, 0.005 * 4.0, 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut cfg = AlgoConfig::new(Algorithm::S3po, 200);
        assert_eq!(cfg.k_safe, 150);
        assert!(cfg.validate().is_ok());
        cfg.beta = 1.5;
        assert!(cfg.validate().is_err());
    }
}
