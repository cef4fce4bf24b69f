//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime
//! failure, 3 failed gate (index validation, lemma-1 check).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{Assignments, RunConfig, DESK_PRESET};
use crate::env2d::Env2d;
use crate::error::{Error, Result};
use crate::harness::checkpoint::Checkpoint;
use crate::harness::metrics::{tail_mean, Table};
use crate::harness::train::run_lemma1;
use crate::safety::validate_index_seeded;
use crate::harness::{self, emit_plots};

pub const OUT_ENV: &str = "S3PO_OUT";
const DEFAULT_OUT: &str = "runs";

#[derive(Parser, Debug)]
#[command(name = "s3po", version, about = "Safe-set guided policy optimization on a 2D navigation task")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Configuration file (sectioned key = value).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from the reduced desk-scale preset before applying the file.
    #[arg(long)]
    pub desk: bool,
    /// Override one key, e.g. `--set algo.beta=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Master seed (same as `--set run.seed=N`).
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut a = Assignments::default();
        if self.desk {
            a.parse_text(DESK_PRESET, "<desk preset>")?;
            // the file may legitimately restate preset keys
            let preset = a.clone();
            if let Some(path) = &self.config {
                let mut file = Assignments::default();
                file.parse_file(path)?;
                a = preset.merged_with(file);
            }
        } else if let Some(path) = &self.config {
            a.parse_file(path)?;
        }
        for o in &self.overrides {
            a.apply_override(o)?;
        }
        if let Some(seed) = self.seed {
            a.apply_override(&format!("run.seed={seed}"))?;
        }
        a.resolve()
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one run and write its run directory.
    #[command(after_help = RunConfig::key_help())]
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output root (defaults to $S3PO_OUT, then ./runs).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run directory name under the output root.
        #[arg(long)]
        name: Option<String>,
        /// Continue an existing run directory from its latest checkpoint.
        #[arg(long, conflicts_with_all = ["config", "overrides", "seed", "desk", "name"])]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint without the safety filter.
    Evaluate {
        run_dir: PathBuf,
        /// Checkpoint file (defaults to the latest one).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluation steps (defaults to run.eval_steps).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Check that the safety index always admits a safe action.
    #[command(name = "validate-index", after_help = RunConfig::key_help())]
    ValidateIndex {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory receiving index_validation.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Filter-on versus filter-off trajectory equivalence for a trained run.
    Lemma1 {
        run_dir: PathBuf,
        /// Number of fresh rollouts (defaults to run.lemma1_seeds).
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Render the SVG panels of one run into its plots directory.
    Plot { run_dir: PathBuf },
    /// Side-by-side summary and overlay plots of several runs.
    Compare {
        #[arg(required = true, num_args = 2..)]
        run_dirs: Vec<PathBuf>,
        /// Directory for compare.csv and overlay plots.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Epochs averaged for the final-value columns.
        #[arg(long, default_value_t = 5)]
        last: usize,
    },
}

/// Map an error to its exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Gate(_) => 3,
        Error::Epoch { source, .. } => exit_code(source),
        _ => 2,
    }
}

fn output_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn load_run(run_dir: &Path) -> Result<RunConfig> {
    let path = run_dir.join("config.resolved");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut a = Assignments::default();
    a.parse_text(&text, &path.display().to_string())?;
    a.resolve()
}

/// The comparison table written by `compare`, one row per run.
pub fn compare_table(run_dirs: &[PathBuf], last: usize) -> Result<String> {
    let mut out = String::from("run,epochs,J_r,M_c,rho_c,trigger_rate,eval_J_r,eval_M_c,eval_cost_rate\n");
    for dir in run_dirs {
        let m = Table::read(&dir.join("metrics.csv"))?;
        let e = Table::read(&dir.join("eval.csv"))?;
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("run");
        let final_rho = m.column("rho_c")?.last().copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{name},{},{},{},{},{},{},{},{}",
            m.rows.len(),
            tail_mean(&m.column("J_r")?, last),
            tail_mean(&m.column("M_c")?, last),
            final_rho,
            tail_mean(&m.column("trigger_rate")?, last),
            tail_mean(&e.column("J_r")?, last),
            tail_mean(&e.column("M_c")?, last),
            tail_mean(&e.column("cost_rate")?, last),
        );
    }
    Ok(out)
}

fn print_table(csv: &str) {
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let cols = rows.first().map_or(0, Vec::len);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r.get(c).map_or(0, |v| short(v).len())).max().unwrap_or(0))
        .collect();
    for r in &rows {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{:>w$}", short(v))).collect();
        println!("{}", cells.join("  "));
    }
}

fn short(v: &str) -> String {
    match v.parse::<f64>() {
        Ok(x) if v.contains('.') || v.contains('e') => format!("{x:.4}"),
        _ => v.to_string(),
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train {
            config,
            out,
            name,
            resume,
        } => {
            let summary = match resume {
                Some(dir) => harness::resume(&dir)?,
                None => {
                    let cfg = config.resolve()?;
                    let name = name.unwrap_or_else(|| format!("{}_seed{}", cfg.algo.algorithm.name(), cfg.seed));
                    let dir = output_root(out.as_deref()).join(name);
                    eprintln!("training into {}", dir.display());
                    harness::train(&cfg, &dir).map_err(|e| {
                        eprintln!("diagnostics: {}", dir.display());
                        e
                    })?
                }
            };
            if let Some(m) = summary.metrics.last() {
                println!(
                    "epoch {}: J_r {:.4} M_c {:.4} rho_c {:.6} trigger {:.4} eval J_r {:.4} eval cost rate {:.6}",
                    m.epoch, m.j_r, m.m_c, m.rho_c, m.trigger_rate, m.eval.j_r, m.eval.cost_rate
                );
            }
            println!("{}", summary.run_dir.display());
            Ok(())
        }
        Command::Evaluate {
            run_dir,
            checkpoint,
            steps,
        } => {
            let cfg = load_run(&run_dir)?;
            let path = match checkpoint {
                Some(p) => p,
                None => Checkpoint::latest(&run_dir)?
                    .ok_or_else(|| Error::Contract(format!("{}: no checkpoints", run_dir.display())))?,
            };
            let ck = Checkpoint::load(&path)?;
            let env = Env2d::new(cfg.layout.clone())?;
            let m = harness::evaluate(
                &env,
                &ck.learner.policy,
                cfg.index.d_min(),
                cfg.seed,
                ck.epoch,
                steps.unwrap_or(cfg.eval_steps),
                cfg.max_episode_len,
            )?;
            let target = run_dir.join("evaluation.json");
            std::fs::write(&target, serde_json::to_string_pretty(&m)?).map_err(|e| Error::io(&target, e))?;
            println!(
                "epoch {}: J_r {:.4} M_c {:.4} cost rate {:.6} over {} steps",
                ck.epoch, m.j_r, m.m_c, m.cost_rate, m.steps
            );
            Ok(())
        }
        Command::ValidateIndex { config, out } => {
            let cfg = config.resolve()?;
            let dir = output_root(out.as_deref());
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let report = validate_index_seeded(&cfg.index, &cfg.layout, cfg.validation_samples, cfg.seed)?;
            let path = dir.join("index_validation.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&path, e))?;
            println!(
                "{} of {} states feasible, worst margin {:.3e} ({})",
                report.n_feasible,
                report.n_samples,
                report.worst_margin,
                path.display()
            );
            for c in &report.counterexamples {
                println!(
                    "  counterexample: phi {:.4} margin {:.3e} at ({:.3}, {:.3}) heading {:.3} speed {:.3}",
                    c.phi, c.margin, c.state.position.x, c.state.position.y, c.state.heading, c.state.speed
                );
            }
            if report.passed {
                Ok(())
            } else {
                Err(Error::Gate("safety index admits no safe action at some sampled states".into()))
            }
        }
        Command::Lemma1 { run_dir, seeds } => {
            let mut cfg = load_run(&run_dir)?;
            if let Some(n) = seeds {
                cfg.lemma1_seeds = n;
            }
            let path = Checkpoint::latest(&run_dir)?
                .ok_or_else(|| Error::Contract(format!("{}: no checkpoints", run_dir.display())))?;
            let ck = Checkpoint::load(&path)?;
            let r = run_lemma1(&cfg, &ck.learner, &run_dir)?;
            println!(
                "{} of {} rollouts untriggered; forward {}, reverse {}",
                r.n_untriggered,
                r.n_rollouts,
                if r.forward_holds { "holds" } else { "FAILS" },
                if r.reverse_holds { "holds" } else { "FAILS" }
            );
            if r.passed {
                Ok(())
            } else {
                Err(Error::Gate(format!("lemma-1 check failed, see {}", run_dir.join("lemma1.json").display())))
            }
        }
        Command::Plot { run_dir } => {
            for p in emit_plots(std::slice::from_ref(&run_dir), &run_dir.join("plots"))? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Compare { run_dirs, out, last } => {
            let dir = output_root(out.as_deref()).join("compare");
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let table = compare_table(&run_dirs, last)?;
            let path = dir.join("compare.csv");
            std::fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
            print_table(&table);
            emit_plots(&run_dirs, &dir)?;
            println!("{}", dir.display());
            Ok(())
        }
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Command {
        Cli::try_parse_from(std::iter::once("s3po").chain(args.iter().copied()))
            .unwrap()
            .command
    }

    #[test]
    fn train_command_parses() {
        match parse(&["train", "--config", "point1hazard.cfg", "--seed", "0", "--set", "algo.beta=0.1"]) {
            Command::Train { config, resume, .. } => {
                assert_eq!(config.config.unwrap(), PathBuf::from("point1hazard.cfg"));
                assert_eq!(config.seed, Some(0));
                assert_eq!(config.overrides, vec!["algo.beta=0.1"]);
                assert!(resume.is_none());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn help_lists_every_key() {
        let err = Cli::try_parse_from(["s3po", "train", "--help"]).unwrap_err();
        let text = err.to_string();
        for (k, _) in crate::config::KEYS {
            assert!(text.contains(k), "{k}");
        }
        assert!(text.contains("(200)") && text.contains("(30000)"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["s3po", "frobnicate"]), 1);
        assert_eq!(run(["s3po", "train", "--set", "bogus.key=1"]), 1);
        assert_eq!(run(["s3po", "train", "--set", "algo.beta=0.1", "--set", "algo.beta=0.2"]), 1);
        assert_eq!(run(["s3po", "plot", "/nonexistent/run"]), 2);
        assert_eq!(exit_code(&Error::Gate("x".into()).at_epoch(3)), 3);
    }

    #[test]
    fn infeasible_index_exits_with_gate_code() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        // weak velocity damping: a fast approach cannot be stopped in time
        let code = run([
            "s3po",
            "validate-index",
            "--set",
            "index.k=0.01",
            "--set",
            "run.validation_samples=60",
            "--out",
            out,
        ]);
        assert_eq!(code, 3);
        assert!(dir.path().join("index_validation.json").exists());
        let ok = run(["s3po", "validate-index", "--set", "run.validation_samples=60", "--out", out]);
        assert_eq!(ok, 0);
    }
}
