//! Training, evaluation without the filter, the trajectory-equivalence
//! check, run artifacts and plots.

pub mod checkpoint;
pub mod collect;
pub mod evaluate;
pub mod lemma1;
pub mod metrics;
pub mod plot;
pub mod train;

pub use checkpoint::{checkpoint_path, Checkpoint};
pub use collect::{collect, run_episode, ActionMode, Batch, BatchKey, Episode, EpisodeSpec, Filter, RolloutStats};
pub use evaluate::evaluate;
pub use lemma1::{lemma1_check, Lemma1Report, RolloutPair};
pub use metrics::{EpochMetrics, EvalMetrics, Table};
pub use plot::emit_plots;
pub use train::{resume, train, TrainSummary};

use crate::algos::{augment_batch, monotonicity_violation_rate, Learner};
use crate::config::RunConfig;
use crate::env2d::Env2d;
use crate::error::Result;
use crate::rng::tag;

/// Monotonicity-violation rate of the cost-value network on a fresh batch
/// of `steps` training-style (filtered when the algorithm filters) steps
/// that the learner has never been fit on.
pub fn heldout_monotonicity(cfg: &RunConfig, learner: &Learner, steps: usize, tol: f64) -> Result<f64> {
    let env = Env2d::new(cfg.layout.clone())?;
    let alg = cfg.algo.algorithm;
    let spec = EpisodeSpec {
        env: &env,
        policy: &learner.policy,
        filter: alg.filter_enabled().then_some(Filter {
            index: &cfg.index,
            budget: &cfg.budget,
        }),
        mode: ActionMode::Sample,
        d_min: cfg.index.d_min(),
        record_states: false,
    };
    let key = BatchKey {
        seed: cfg.seed,
        purpose: tag::HELDOUT,
        epoch: 0,
    };
    let batch = collect(&spec, key, steps, cfg.max_episode_len, cfg.workers)?;
    let augmented = augment_batch(alg, &batch.trajectories())?;
    Ok(monotonicity_violation_rate(&learner.cost_value, &augmented, tol))
}
