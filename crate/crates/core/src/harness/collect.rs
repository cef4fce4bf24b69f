//! Rollouts with and without the safety filter.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env2d::{Action, Env2d, EnvState};
use crate::error::Result;
use crate::mmdp::{RawTransition, Trajectory};
use crate::policy::PolicyParams;
use crate::rng::{self, tag};
use crate::safety::{issa_project, phi0, ProjectionBudget, SafetyIndexParams};

#[derive(Debug, Clone, Copy)]
pub struct Filter<'a> {
    pub index: &'a SafetyIndexParams,
    pub budget: &'a ProjectionBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    /// Draw from the Gaussian policy.
    Sample,
    /// Use the distribution mean.
    Mean,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub steps: usize,
    pub triggers: usize,
    pub queries: usize,
    pub env_cost: f64,
    pub cost_steps: usize,
    pub max_phi0: f64,
}

impl RolloutStats {
    fn new() -> Self {
        RolloutStats {
            max_phi0: f64::NEG_INFINITY,
            ..Default::default()
        }
    }

    fn absorb(&mut self, other: &RolloutStats) {
        self.steps += other.steps;
        self.triggers += other.triggers;
        self.queries += other.queries;
        self.env_cost += other.env_cost;
        self.cost_steps += other.cost_steps;
        self.max_phi0 = self.max_phi0.max(other.max_phi0);
    }

    pub fn trigger_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.triggers as f64 / self.steps as f64
        }
    }
}

/// One episode (or the piece of it that fit into the step budget).
#[derive(Debug, Clone)]
pub struct Episode {
    pub trajectory: Trajectory<RawTransition>,
    /// Visited states `s_0 .. s_T`, recorded only on request.
    pub states: Vec<EnvState>,
    pub stats: RolloutStats,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.trajectory.steps.iter().map(|s| s.reward).sum()
    }

    pub fn total_env_cost(&self) -> f64 {
        self.trajectory.steps.iter().map(|s| s.env_cost).sum()
    }
}

pub struct EpisodeSpec<'a> {
    pub env: &'a Env2d,
    pub policy: &'a PolicyParams,
    pub filter: Option<Filter<'a>>,
    pub mode: ActionMode,
    /// `d_min` used to monitor the raw safety specification.
    pub d_min: f64,
    pub record_states: bool,
}

/// Roll one episode from `reset(reset_seed)` for at most `max_steps` steps;
/// `horizon` decides whether the result counts as a complete episode.
pub fn run_episode(
    spec: &EpisodeSpec,
    reset_seed: u64,
    horizon: usize,
    max_steps: usize,
    noise: &mut impl Rng,
) -> Result<Episode> {
    let (mut state, mut obs) = spec.env.reset(reset_seed)?;
    let mut stats = RolloutStats::new();
    stats.max_phi0 = phi0(&state, spec.d_min);
    let n = horizon.min(max_steps);
    let mut steps = Vec::with_capacity(n);
    let mut states = Vec::new();
    if spec.record_states {
        states.push(state.clone());
    }
    for _ in 0..n {
        let dist = spec.policy.forward(&obs.features());
        let raw: Vec<f64> = match spec.mode {
            ActionMode::Sample => dist.sample(noise),
            ActionMode::Mean => dist.mean.clone(),
        };
        let action = Action::from_slice(&raw);
        let (applied, delta_phi, triggered) = match &spec.filter {
            Some(f) => {
                let proj = issa_project(&state, &action, f.index, spec.env, f.budget)?;
                stats.queries += proj.queries_used;
                (proj.safe_action, Some(proj.imaginary_cost), proj.triggered)
            }
            None => (action, None, false),
        };
        let out = spec.env.step(&state, &applied)?;
        stats.steps += 1;
        stats.triggers += usize::from(triggered);
        stats.env_cost += out.cost;
        stats.cost_steps += usize::from(out.cost > 0.0);
        stats.max_phi0 = stats.max_phi0.max(phi0(&out.state, spec.d_min));
        steps.push(RawTransition {
            observation: obs,
            raw_action: [raw[0], raw[1]],
            action,
            applied_action: applied,
            reward: out.reward,
            delta_phi,
            env_cost: out.cost,
            triggered,
            next_observation: out.observation.clone(),
        });
        if spec.record_states {
            states.push(out.state.clone());
        }
        state = out.state;
        obs = out.observation;
    }
    Ok(Episode {
        trajectory: Trajectory {
            steps,
            complete: n == horizon,
        },
        states,
        stats,
    })
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub episodes: Vec<Episode>,
    pub stats: RolloutStats,
}

impl Batch {
    pub fn trajectories(&self) -> Vec<Trajectory<RawTransition>> {
        self.episodes.iter().map(|e| e.trajectory.clone()).collect()
    }

    /// Mean over complete episodes (all episodes if none completed).
    pub fn episode_mean(&self, f: impl Fn(&Episode) -> f64) -> f64 {
        let complete: Vec<&Episode> = self.episodes.iter().filter(|e| e.trajectory.complete).collect();
        let pool: Vec<&Episode> = if complete.is_empty() {
            self.episodes.iter().collect()
        } else {
            complete
        };
        if pool.is_empty() {
            return 0.0;
        }
        pool.iter().map(|e| f(e)).sum::<f64>() / pool.len() as f64
    }
}

/// Identifies a batch: master seed, a tag naming the purpose and an epoch.
#[derive(Debug, Clone, Copy)]
pub struct BatchKey {
    pub seed: u64,
    pub purpose: u64,
    pub epoch: u64,
}

/// Collect exactly `steps` environment steps split across `workers`.
///
/// Worker `w` owns its reset seeds and its noise stream, both derived from
/// `(seed, purpose, epoch, w)`; episodes are concatenated in worker order,
/// so the result depends on `(seed, workers)` only.
pub fn collect(spec: &EpisodeSpec, key: BatchKey, steps: usize, horizon: usize, workers: usize) -> Result<Batch> {
    let workers = workers.max(1);
    let share = |w: usize| steps / workers + usize::from(w < steps % workers);
    let run_worker = |w: usize| -> Result<Vec<Episode>> {
        let path = [key.purpose, key.epoch, w as u64];
        let mut noise = rng::stream(key.seed, &[&path[..], &[tag::POLICY_NOISE]].concat());
        let mut left = share(w);
        let mut out = Vec::new();
        let mut j = 0u64;
        while left > 0 {
            let reset_seed = rng::derive_seed(key.seed, &[&path[..], &[tag::EPISODE, j]].concat());
            let ep = run_episode(spec, reset_seed, horizon, left, &mut noise)?;
            left -= ep.stats.steps;
            out.push(ep);
            j += 1;
        }
        Ok(out)
    };
    let per_worker: Vec<Result<Vec<Episode>>> = if workers == 1 {
        vec![run_worker(0)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers).map(|w| scope.spawn(move || run_worker(w))).collect();
            handles.into_iter().map(|h| h.join().expect("rollout worker panicked")).collect()
        })
    };
    let mut episodes = Vec::new();
    let mut stats = RolloutStats::new();
    for r in per_worker {
        for ep in r? {
            stats.absorb(&ep.stats);
            episodes.push(ep);
        }
    }
    Ok(Batch { episodes, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algos::{AlgoConfig, Algorithm, Learner};
    use crate::env2d::LayoutConfig;

    fn learner() -> Learner {
        let mut cfg = AlgoConfig::new(Algorithm::S3po, 1);
        cfg.hidden = vec![8];
        Learner::new(&cfg, 0).unwrap()
    }

    #[test]
    fn exact_step_count_and_worker_determinism() {
        let env = Env2d::new(LayoutConfig::default()).unwrap();
        let l = learner();
        let idx = SafetyIndexParams::default();
        let budget = ProjectionBudget::default();
        let spec = EpisodeSpec {
            env: &env,
            policy: &l.policy,
            filter: Some(Filter {
                index: &idx,
                budget: &budget,
            }),
            mode: ActionMode::Sample,
            d_min: idx.d_min(),
            record_states: false,
        };
        let key = BatchKey {
            seed: 4,
            purpose: tag::ROLLOUT,
            epoch: 1,
        };
        let a = collect(&spec, key, 333, 100, 3).unwrap();
        assert_eq!(a.stats.steps, 333);
        assert_eq!(a.trajectories().iter().map(|t| t.len()).sum::<usize>(), 333);
        assert!(a.trajectories().iter().all(|t| t.steps.iter().all(|s| s.delta_phi.is_some())));
        let b = collect(&spec, key, 333, 100, 3).unwrap();
        assert_eq!(a.trajectories(), b.trajectories());
        // the filter keeps the raw specification satisfied
        assert!(a.stats.max_phi0 <= 0.0);
        assert_eq!(a.stats.env_cost, 0.0);
    }

    #[test]
    fn unfiltered_rollouts_mark_delta_phi_absent() {
        let env = Env2d::new(LayoutConfig::default()).unwrap();
        let l = learner();
        let spec = EpisodeSpec {
            env: &env,
            policy: &l.policy,
            filter: None,
            mode: ActionMode::Mean,
            d_min: 0.75,
            record_states: true,
        };
        let ep = run_episode(&spec, 3, 50, 50, &mut rng::stream(0, &[])).unwrap();
        assert!(ep.trajectory.complete);
        assert_eq!(ep.states.len(), 51);
        assert!(ep.trajectory.steps.iter().all(|s| s.delta_phi.is_none() && !s.triggered));
    }
}
