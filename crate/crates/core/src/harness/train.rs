//! The epoch loop and everything it leaves behind in a run directory.
//!
//! ```text
//! run_dir/
//!   config.resolved        effective configuration, re-parseable
//!   index_validation.json  safe-control-set check of the index
//!   metrics.csv            one row per epoch (training side)
//!   eval.csv               filter-free evaluation after each epoch
//!   diagnostics.csv        solver and value-fit details per update
//!   timing.csv             wall-clock split per epoch
//!   checkpoints/epoch_NNNN
//!   lemma1.json            written after the final epoch
//!   plots/*.svg
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::algos::{self, Learner};
use crate::config::{self, RunConfig};
use crate::env2d::Env2d;
use crate::error::{Error, Result};
use crate::harness::checkpoint::{checkpoint_path, Checkpoint, CHECKPOINT_VERSION};
use crate::harness::collect::{collect, ActionMode, BatchKey, EpisodeSpec, Filter};
use crate::harness::evaluate::evaluate;
use crate::harness::lemma1::{lemma1_check, Lemma1Report};
use crate::harness::metrics::{self, CsvLog, EpochMetrics};
use crate::harness::plot::emit_plots;
use crate::rng::tag;
use crate::safety::{validate_index_seeded, ValidationReport};

/// Fraction of untriggered rollouts the lemma-1 gate asks for.
pub const LEMMA1_MIN_UNTRIGGERED: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub config: RunConfig,
    /// Epochs run by this call (all of them unless resuming).
    pub metrics: Vec<EpochMetrics>,
    pub learner: Learner,
    pub validation: ValidationReport,
    pub lemma1: Lemma1Report,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Check the safety index and record the report. Filter-free algorithms
/// get the report too but never fail on it.
pub fn run_index_validation(cfg: &RunConfig, run_dir: &Path) -> Result<ValidationReport> {
    let report = validate_index_seeded(&cfg.index, &cfg.layout, cfg.validation_samples, cfg.seed)?;
    write_json(&run_dir.join("index_validation.json"), &report)?;
    if cfg.algo.algorithm.filter_enabled() && !report.passed {
        return Err(Error::Gate(format!(
            "safety index infeasible at {} of {} sampled states (worst margin {:.3e})",
            report.n_samples - report.n_feasible,
            report.n_samples,
            report.worst_margin
        )));
    }
    Ok(report)
}

/// Run the lemma-1 check for the current policy and write `lemma1.json`.
pub fn run_lemma1(cfg: &RunConfig, learner: &Learner, run_dir: &Path) -> Result<Lemma1Report> {
    let env = Env2d::new(cfg.layout.clone())?;
    let report = lemma1_check(
        &env,
        &learner.policy,
        &cfg.index,
        &cfg.budget,
        cfg.seed,
        cfg.lemma1_seeds,
        cfg.max_episode_len,
        LEMMA1_MIN_UNTRIGGERED,
    )?;
    write_json(&run_dir.join("lemma1.json"), &report)?;
    Ok(report)
}

/// Train from scratch into `run_dir`, replacing any previous run there.
pub fn train(cfg: &RunConfig, run_dir: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    mkdir(run_dir)?;
    let ck_dir = run_dir.join("checkpoints");
    if ck_dir.exists() {
        std::fs::remove_dir_all(&ck_dir).map_err(|e| Error::io(&ck_dir, e))?;
    }
    mkdir(&ck_dir)?;
    let text = cfg.to_text();
    let resolved = run_dir.join("config.resolved");
    std::fs::write(&resolved, &text).map_err(|e| Error::io(&resolved, e))?;
    let validation = run_index_validation(cfg, run_dir)?;
    let learner = Learner::new(&cfg.algo, cfg.seed)?;
    let state = LoopState {
        learner,
        cumulative_cost: 0.0,
        cumulative_steps: 0,
        first_epoch: 1,
    };
    run_loop(cfg, &text, run_dir, state, None, validation)
}

/// Continue the run in `run_dir` from its latest checkpoint, using the
/// configuration stored there. Rows written after that checkpoint are
/// dropped and recomputed, so the final files equal those of an
/// uninterrupted run.
pub fn resume(run_dir: &Path) -> Result<TrainSummary> {
    let resolved = run_dir.join("config.resolved");
    let text = std::fs::read_to_string(&resolved).map_err(|e| Error::io(&resolved, e))?;
    let mut a = config::Assignments::default();
    a.parse_text(&text, &resolved.display().to_string())?;
    let cfg = a.resolve()?;
    let Some(path) = Checkpoint::latest(run_dir)? else {
        return train(&cfg, run_dir);
    };
    let ck = Checkpoint::load(&path)?;
    if ck.config != text || ck.seed != cfg.seed {
        return Err(Error::Config(format!(
            "{} was written for a different configuration than {}",
            path.display(),
            resolved.display()
        )));
    }
    let validation = run_index_validation(&cfg, run_dir)?;
    let state = LoopState {
        learner: ck.learner,
        cumulative_cost: ck.cumulative_cost,
        cumulative_steps: ck.cumulative_steps,
        first_epoch: ck.epoch + 1,
    };
    run_loop(&cfg, &text, run_dir, state, Some(ck.epoch), validation)
}

struct LoopState {
    learner: Learner,
    cumulative_cost: f64,
    cumulative_steps: usize,
    first_epoch: usize,
}

fn run_loop(
    cfg: &RunConfig,
    config_text: &str,
    run_dir: &Path,
    mut state: LoopState,
    keep_through: Option<usize>,
    validation: ValidationReport,
) -> Result<TrainSummary> {
    let env = Env2d::new(cfg.layout.clone())?;
    let alg = cfg.algo.algorithm;
    let mut metrics_log = CsvLog::open(&run_dir.join("metrics.csv"), &metrics::METRICS_COLUMNS, keep_through)?;
    let mut eval_log = CsvLog::open(&run_dir.join("eval.csv"), &metrics::EVAL_COLUMNS, keep_through)?;
    let mut diag_log = CsvLog::open(&run_dir.join("diagnostics.csv"), &metrics::DIAGNOSTIC_COLUMNS, keep_through)?;
    let mut timing_log = CsvLog::open(&run_dir.join("timing.csv"), &metrics::TIMING_COLUMNS, keep_through)?;
    let mut history = Vec::new();

    for epoch in state.first_epoch..=cfg.epochs {
        let started = Instant::now();
        let spec = EpisodeSpec {
            env: &env,
            policy: &state.learner.policy,
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
            purpose: tag::ROLLOUT,
            epoch: epoch as u64,
        };
        let batch = collect(&spec, key, cfg.steps_per_epoch, cfg.max_episode_len, cfg.workers)
            .map_err(|e| e.at_epoch(epoch))?;
        let collect_s = started.elapsed().as_secs_f64();

        let t = Instant::now();
        let report = algos::update(&cfg.algo, &mut state.learner, &batch.trajectories(), epoch, cfg.max_episode_len)
            .map_err(|e| e.at_epoch(epoch))?;
        let update_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let eval = evaluate(
            &env,
            &state.learner.policy,
            cfg.index.d_min(),
            cfg.seed,
            epoch,
            cfg.eval_steps,
            cfg.max_episode_len,
        )
        .map_err(|e| e.at_epoch(epoch))?;
        let eval_s = t.elapsed().as_secs_f64();

        state.cumulative_cost += batch.stats.env_cost;
        state.cumulative_steps += batch.stats.steps;
        let m = EpochMetrics {
            epoch,
            j_r: batch.episode_mean(|e| e.total_reward()),
            m_c: batch.episode_mean(|e| e.total_env_cost()),
            rho_c: state.cumulative_cost / state.cumulative_steps as f64,
            trigger_rate: batch.stats.trigger_rate(),
            j_d: report.d_return,
            kl: report.kl,
            solver_case: report.case.name().to_string(),
            ls_depth: report.ls_depth,
            wall_s: started.elapsed().as_secs_f64(),
            env_cost: batch.stats.env_cost,
            max_phi0: batch.stats.max_phi0,
            cost_steps: batch.stats.cost_steps,
            queries: batch.stats.queries,
            accepted: report.accepted,
            reward_change: report.reward_change,
            cost_change: report.cost_change,
            c: report.c,
            epsilon_d: report.epsilon_d,
            slack: report.slack,
            nu: report.nu,
            lagrange: report.lagrange,
            value_loss: report.value_loss,
            cost_value_loss: report.cost_value_loss,
            eval,
            timing: [collect_s, update_s, eval_s],
        };
        metrics_log.append(&m.metrics_row(cfg.record_wall_time))?;
        eval_log.append(&m.eval_row())?;
        diag_log.append(&m.diagnostics_row())?;
        timing_log.append(&m.timing_row())?;
        history.push(m);

        let due = cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0;
        if due || epoch == cfg.epochs {
            Checkpoint {
                version: CHECKPOINT_VERSION,
                epoch,
                seed: cfg.seed,
                config: config_text.to_string(),
                learner: state.learner.clone(),
                cumulative_cost: state.cumulative_cost,
                cumulative_steps: state.cumulative_steps,
            }
            .save(&checkpoint_path(run_dir, epoch))?;
        }
    }

    let lemma1 = run_lemma1(cfg, &state.learner, run_dir)?;
    emit_plots(&[run_dir.to_path_buf()], &run_dir.join("plots"))?;
    Ok(TrainSummary {
        run_dir: run_dir.to_path_buf(),
        config: cfg.clone(),
        metrics: history,
        learner: state.learner,
        validation,
        lemma1,
    })
}
