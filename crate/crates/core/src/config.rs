//! Run configuration in a flat sectioned text format.
//!
//! ```text
//! # comment
//! [run]
//! epochs = 50
//! [algo]
//! name = s3po
//! ```
//!
//! Every key is addressed as `section.key`, both in files and in command-line
//! overrides (`--set algo.beta=0.01`). The key table below is the single
//! source for parsing, defaults, help text and the resolved dump.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::algos::{default_k_safe, AlgoConfig, Algorithm};
use crate::env2d::LayoutConfig;
use crate::error::{Error, Result};
use crate::safety::{ProjectionBudget, SafetyIndexParams};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub layout: LayoutConfig,
    pub index: SafetyIndexParams,
    pub budget: ProjectionBudget,
    pub algo: AlgoConfig,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub max_episode_len: usize,
    pub eval_steps: usize,
    pub seed: u64,
    pub workers: usize,
    pub checkpoint_every: usize,
    /// When false the `wall_s` column is written as 0 so that metrics files
    /// are byte-reproducible; real timings always go to `timing.csv`.
    pub record_wall_time: bool,
    pub validation_samples: usize,
    pub lemma1_seeds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let epochs = 200;
        RunConfig {
            layout: LayoutConfig::default(),
            index: SafetyIndexParams::default(),
            budget: ProjectionBudget::default(),
            algo: AlgoConfig::new(Algorithm::S3po, epochs),
            epochs,
            steps_per_epoch: 30_000,
            max_episode_len: 1000,
            eval_steps: 10_000,
            seed: 0,
            workers: 1,
            checkpoint_every: 10,
            record_wall_time: false,
            validation_samples: 3000,
            lemma1_seeds: 100,
        }
    }
}

/// `(key, description)` for every accepted key, in dump order.
pub const KEYS: &[(&str, &str)] = &[
    ("run.epochs", "number of training epochs"),
    ("run.steps_per_epoch", "environment steps collected per epoch"),
    ("run.max_episode_len", "episode horizon"),
    ("run.eval_steps", "steps of filter-free evaluation after each epoch"),
    ("run.seed", "master seed"),
    ("run.workers", "parallel rollout workers (changes the stream partition)"),
    ("run.checkpoint_every", "epochs between checkpoints (0 = final only)"),
    ("run.record_wall_time", "write real timings into metrics.csv"),
    ("run.validation_samples", "states sampled by validate-index"),
    ("run.lemma1_seeds", "fresh seeds rolled out by the lemma1 check"),
    ("env.hazards", "number of hazard disks"),
    ("env.pillars", "number of pillars"),
    ("env.hazard_radius", "hazard radius (m)"),
    ("env.pillar_radius", "pillar radius (m)"),
    ("env.goal_radius", "goal radius (m)"),
    ("env.arena_half_size", "half side of the square arena (m)"),
    ("env.dt", "integration step (s)"),
    ("env.a_max", "acceleration at full command (m/s^2)"),
    ("env.omega_max", "turn rate at full command (rad/s)"),
    ("env.v_max", "speed limit (m/s)"),
    ("env.lidar_range", "lidar range (m)"),
    ("env.placement_clearance", "free margin around placed objects (m)"),
    ("env.goal_min_distance", "minimum robot-goal distance at placement (m)"),
    ("index.n", "distance exponent of the safety index"),
    ("index.k", "velocity gain of the safety index"),
    ("index.sigma", "offset of the safety index"),
    ("index.eta", "required decay per step outside the safe set"),
    ("index.d_min", "minimum allowed surface distance (m)"),
    ("filter.max_queries", "dynamics queries allowed per projection"),
    ("filter.rays", "search directions per projection"),
    ("filter.bisection_steps", "bisection steps per ray"),
    ("filter.fallback_grid", "side of the fallback action grid"),
    ("algo.name", "s3po | scpo | trpo | trpo_lagrangian | trpo_issa"),
    ("algo.target_cost", "constraint threshold"),
    ("algo.lagrangian_lr", "multiplier step size (trpo_lagrangian)"),
    ("algo.beta", "coefficient of the slack term, in [0, 1]"),
    ("algo.k_safe", "last epoch of the cost-first line-search schedule ('auto' = 75% of epochs)"),
    ("algo.weight", "monotonicity weight of the cost-value loss"),
    ("algo.delta", "trust-region radius (mean KL)"),
    ("algo.gamma", "reward discount"),
    ("algo.lambda", "advantage discount"),
    ("algo.backtrack_coeff", "line-search shrink factor"),
    ("algo.backtrack_iters", "maximum line-search steps"),
    ("algo.cg_iters", "conjugate-gradient iterations"),
    ("algo.cg_tol", "conjugate-gradient relative residual tolerance"),
    ("algo.damping", "Fisher damping"),
    ("algo.value_iters", "value-network gradient steps per epoch"),
    ("algo.value_lr", "value-network learning rate"),
    ("algo.hidden", "hidden layer widths, comma separated"),
];

impl RunConfig {
    /// Every key with its current value, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let l = &self.layout;
        let i = &self.index;
        let b = &self.budget;
        let a = &self.algo;
        let values = [
            self.epochs.to_string(),
            self.steps_per_epoch.to_string(),
            self.max_episode_len.to_string(),
            self.eval_steps.to_string(),
            self.seed.to_string(),
            self.workers.to_string(),
            self.checkpoint_every.to_string(),
            self.record_wall_time.to_string(),
            self.validation_samples.to_string(),
            self.lemma1_seeds.to_string(),
            l.hazards.to_string(),
            l.pillars.to_string(),
            l.hazard_radius.to_string(),
            l.pillar_radius.to_string(),
            l.goal_radius.to_string(),
            l.arena_half_size.to_string(),
            l.dt.to_string(),
            l.a_max.to_string(),
            l.omega_max.to_string(),
            l.v_max.to_string(),
            l.lidar_range.to_string(),
            l.placement_clearance.to_string(),
            l.goal_min_distance.to_string(),
            i.exponent().to_string(),
            i.k().to_string(),
            i.sigma().to_string(),
            i.eta().to_string(),
            i.d_min().to_string(),
            b.max_queries.to_string(),
            b.rays.to_string(),
            b.bisection_steps.to_string(),
            b.fallback_grid.to_string(),
            a.algorithm.name().to_string(),
            a.target_cost.to_string(),
            a.lagrangian_lr.to_string(),
            a.beta.to_string(),
            a.k_safe.to_string(),
            a.weight.to_string(),
            a.delta.to_string(),
            a.gamma.to_string(),
            a.lambda.to_string(),
            a.backtrack_coeff.to_string(),
            a.backtrack_iters.to_string(),
            a.cg.iters.to_string(),
            a.cg.tol.to_string(),
            a.cg.damping.to_string(),
            a.value_iters.to_string(),
            a.value_lr.to_string(),
            a.hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        ];
        KEYS.iter().map(|(k, _)| *k).zip(values).collect()
    }

    /// The resolved configuration as text; parsing it yields `self` again.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (key, value) in self.entries() {
            let (s, k) = key.split_once('.').unwrap();
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{s}]");
                section = s;
            }
            let _ = writeln!(out, "{k} = {value}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.algo.validate()?;
        if self.epochs == 0 || self.steps_per_epoch == 0 || self.max_episode_len == 0 {
            return Err(Error::Config("run.epochs, run.steps_per_epoch and run.max_episode_len must be positive".into()));
        }
        if self.steps_per_epoch < self.max_episode_len {
            return Err(Error::Config(format!(
                "run.steps_per_epoch ({}) must be at least run.max_episode_len ({})",
                self.steps_per_epoch, self.max_episode_len
            )));
        }
        if self.eval_steps == 0 {
            return Err(Error::Config("run.eval_steps must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("run.workers must be positive".into()));
        }
        if self.budget.max_queries == 0 || self.budget.rays == 0 || self.budget.fallback_grid < 2 {
            return Err(Error::Config("filter budget must allow at least one query, one ray and a 2x2 grid".into()));
        }
        Ok(())
    }

    /// Help text listing every key with its default.
    pub fn key_help() -> String {
        let defaults = RunConfig::default().entries();
        let mut out = String::from("configuration keys (default):\n");
        for ((key, help), (_, value)) in KEYS.iter().zip(defaults) {
            let shown = if *key == "algo.k_safe" { "auto".to_string() } else { value };
            let _ = writeln!(out, "  {key:<26} {help} ({shown})");
        }
        out
    }
}

/// Where a configuration value came from, for error messages.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File { path: String, line: usize },
    Override(String),
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Source::File { path, line } => write!(f, "{path}:{line}"),
            Source::Override(text) => write!(f, "--set {text}"),
        }
    }
}

/// Collected `section.key = value` assignments before typing.
#[derive(Debug, Clone, Default)]
pub struct Assignments {
    values: BTreeMap<String, (String, Source)>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl Assignments {
    fn insert(&mut self, key: String, value: String, source: Source, allow_replace: bool) -> Result<()> {
        if !known(&key) {
            return Err(Error::Config(format!("{source}: unknown key '{key}'")));
        }
        if let Some((old, old_source)) = self.values.get(&key) {
            let same_kind = matches!(
                (&source, old_source),
                (Source::Override(_), Source::Override(_)) | (Source::File { .. }, Source::File { .. })
            );
            if same_kind && !allow_replace && *old != value {
                return Err(Error::Config(format!(
                    "conflicting values for '{key}': '{old}' from {old_source} and '{value}' from {source}"
                )));
            }
        }
        self.values.insert(key, (value, source));
        Ok(())
    }

    pub fn parse_text(&mut self, text: &str, path: &str) -> Result<()> {
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            let source = Source::File {
                path: path.to_string(),
                line: idx + 1,
            };
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(name.trim().to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{source}: expected 'key = value', got '{line}'")))?;
            let k = k.trim();
            let key = match &section {
                Some(s) if !k.contains('.') => format!("{s}.{k}"),
                _ => k.to_string(),
            };
            self.insert(key, v.trim().to_string(), source, false)?;
        }
        Ok(())
    }

    pub fn parse_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.parse_text(&text, &path.display().to_string())
    }

    /// `section.key=value` from the command line. Overrides win over file
    /// values; two overrides of one key must agree.
    pub fn apply_override(&mut self, text: &str) -> Result<()> {
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{text}' is not of the form section.key=value")))?;
        self.insert(k.trim().to_string(), v.trim().to_string(), Source::Override(text.to_string()), false)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.insert(key.to_string(), value.to_string(), Source::Override(format!("{key}={value}")), true)
    }

    /// `self` with every assignment of `later` layered on top.
    pub fn merged_with(mut self, later: Assignments) -> Assignments {
        self.values.extend(later.values);
        self
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let get = |key: &str| self.values.get(key);
        macro_rules! field {
            ($key:literal, $target:expr) => {
                if let Some((v, src)) = get($key) {
                    $target = v
                        .parse()
                        .map_err(|e| Error::Config(format!("{src}: bad value '{v}' for '{}': {e}", $key)))?;
                }
            };
        }
        field!("run.epochs", cfg.epochs);
        field!("run.steps_per_epoch", cfg.steps_per_epoch);
        field!("run.max_episode_len", cfg.max_episode_len);
        field!("run.eval_steps", cfg.eval_steps);
        field!("run.seed", cfg.seed);
        field!("run.workers", cfg.workers);
        field!("run.checkpoint_every", cfg.checkpoint_every);
        field!("run.record_wall_time", cfg.record_wall_time);
        field!("run.validation_samples", cfg.validation_samples);
        field!("run.lemma1_seeds", cfg.lemma1_seeds);
        let l = &mut cfg.layout;
        field!("env.hazards", l.hazards);
        field!("env.pillars", l.pillars);
        field!("env.hazard_radius", l.hazard_radius);
        field!("env.pillar_radius", l.pillar_radius);
        field!("env.goal_radius", l.goal_radius);
        field!("env.arena_half_size", l.arena_half_size);
        field!("env.dt", l.dt);
        field!("env.a_max", l.a_max);
        field!("env.omega_max", l.omega_max);
        field!("env.v_max", l.v_max);
        field!("env.lidar_range", l.lidar_range);
        field!("env.placement_clearance", l.placement_clearance);
        field!("env.goal_min_distance", l.goal_min_distance);

        let d = SafetyIndexParams::default();
        let (mut n, mut k, mut sigma, mut eta, mut d_min) = (d.exponent(), d.k(), d.sigma(), d.eta(), d.d_min());
        field!("index.n", n);
        field!("index.k", k);
        field!("index.sigma", sigma);
        field!("index.eta", eta);
        field!("index.d_min", d_min);
        cfg.index = SafetyIndexParams::new(n, k, sigma, eta, d_min)?;

        let b = &mut cfg.budget;
        field!("filter.max_queries", b.max_queries);
        field!("filter.rays", b.rays);
        field!("filter.bisection_steps", b.bisection_steps);
        field!("filter.fallback_grid", b.fallback_grid);

        if let Some((v, _)) = get("algo.name") {
            cfg.algo.algorithm = Algorithm::parse(v)?;
        }
        cfg.algo.k_safe = default_k_safe(cfg.epochs);
        let a = &mut cfg.algo;
        if let Some((v, src)) = get("algo.k_safe") {
            if v != "auto" {
                a.k_safe = v
                    .parse()
                    .map_err(|e| Error::Config(format!("{src}: bad value '{v}' for 'algo.k_safe': {e}")))?;
            }
        }
        field!("algo.target_cost", a.target_cost);
        field!("algo.lagrangian_lr", a.lagrangian_lr);
        field!("algo.beta", a.beta);
        field!("algo.weight", a.weight);
        field!("algo.delta", a.delta);
        field!("algo.gamma", a.gamma);
        field!("algo.lambda", a.lambda);
        field!("algo.backtrack_coeff", a.backtrack_coeff);
        field!("algo.backtrack_iters", a.backtrack_iters);
        field!("algo.cg_iters", a.cg.iters);
        field!("algo.cg_tol", a.cg.tol);
        field!("algo.damping", a.cg.damping);
        field!("algo.value_iters", a.value_iters);
        field!("algo.value_lr", a.value_lr);
        if let Some((v, src)) = get("algo.hidden") {
            a.hidden = v
                .split(',')
                .map(|w| w.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("{src}: bad layer list '{v}': {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse a configuration text with no overrides.
pub fn parse_str(text: &str) -> Result<RunConfig> {
    let mut a = Assignments::default();
    a.parse_text(text, "<text>")?;
    a.resolve()
}

/// The reduced setting used for single-CPU reproductions: 50 epochs of
/// 4000 steps with 250-step episodes.
pub const DESK_PRESET: &str = "\
[run]
epochs = 50
steps_per_epoch = 4000
max_episode_len = 250
eval_steps = 10000
checkpoint_every = 10

[algo]
beta = 0.01
";
