//! Per-epoch records and the CSV files they are written to.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_COLUMNS: [&str; 10] = [
    "epoch",
    "J_r",
    "M_c",
    "rho_c",
    "trigger_rate",
    "J_D",
    "kl",
    "solver_case",
    "ls_depth",
    "wall_s",
];

pub const EVAL_COLUMNS: [&str; 4] = ["epoch", "J_r", "M_c", "cost_rate"];

pub const DIAGNOSTIC_COLUMNS: [&str; 15] = [
    "epoch",
    "env_cost",
    "max_phi0",
    "cost_steps",
    "queries",
    "accepted",
    "reward_change",
    "cost_change",
    "c",
    "epsilon_D",
    "slack",
    "nu",
    "lagrange",
    "value_loss",
    "cost_value_loss",
];

pub const TIMING_COLUMNS: [&str; 4] = ["epoch", "collect_s", "update_s", "eval_s"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub j_r: f64,
    pub m_c: f64,
    pub cost_rate: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub j_r: f64,
    pub m_c: f64,
    pub rho_c: f64,
    pub trigger_rate: f64,
    pub j_d: f64,
    pub kl: f64,
    pub solver_case: String,
    pub ls_depth: usize,
    pub wall_s: f64,
    /// Raw environment cost summed over this epoch's training steps.
    pub env_cost: f64,
    pub max_phi0: f64,
    pub cost_steps: usize,
    pub queries: usize,
    pub accepted: bool,
    pub reward_change: f64,
    pub cost_change: f64,
    pub c: f64,
    pub epsilon_d: f64,
    pub slack: f64,
    pub nu: f64,
    pub lagrange: f64,
    pub value_loss: f64,
    pub cost_value_loss: f64,
    pub eval: EvalMetrics,
    pub timing: [f64; 3],
}

impl EpochMetrics {
    pub fn metrics_row(&self, record_wall_time: bool) -> String {
        let wall = if record_wall_time { self.wall_s } else { 0.0 };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.j_r,
            self.m_c,
            self.rho_c,
            self.trigger_rate,
            self.j_d,
            self.kl,
            self.solver_case,
            self.ls_depth,
            wall
        )
    }

    pub fn eval_row(&self) -> String {
        format!("{},{},{},{}", self.epoch, self.eval.j_r, self.eval.m_c, self.eval.cost_rate)
    }

    pub fn diagnostics_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.env_cost,
            self.max_phi0,
            self.cost_steps,
            self.queries,
            u8::from(self.accepted),
            self.reward_change,
            self.cost_change,
            self.c,
            self.epsilon_d,
            self.slack,
            self.nu,
            self.lagrange,
            self.value_loss,
            self.cost_value_loss
        )
    }

    pub fn timing_row(&self) -> String {
        format!("{},{},{},{}", self.epoch, self.timing[0], self.timing[1], self.timing[2])
    }
}

/// A CSV file that receives one row per epoch.
pub struct CsvLog {
    file: File,
    path: String,
}

impl CsvLog {
    /// Create the file with its header, or, when `keep_through` is given,
    /// reopen it keeping only rows whose epoch is at most that value.
    pub fn open(path: &Path, columns: &[&str], keep_through: Option<usize>) -> Result<Self> {
        let header = columns.join(",");
        let mut kept = vec![header.clone()];
        if let Some(last) = keep_through {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut lines = text.lines();
            if lines.next() != Some(header.as_str()) {
                return Err(Error::Contract(format!("{}: unexpected header", path.display())));
            }
            for line in lines {
                let epoch: usize = line
                    .split(',')
                    .next()
                    .and_then(|e| e.parse().ok())
                    .ok_or_else(|| Error::Contract(format!("{}: malformed row '{line}'", path.display())))?;
                if epoch <= last {
                    kept.push(line.to_string());
                }
            }
        }
        let mut body = kept.join("\n");
        body.push('\n');
        std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
        let file = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
        Ok(CsvLog {
            file,
            path: path.display().to_string(),
        })
    }

    pub fn append(&mut self, row: &str) -> Result<()> {
        writeln!(self.file, "{row}")
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// A parsed CSV file with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Contract(format!("{}: empty file", path.display())))?
            .split(',')
            .map(str::to_string)
            .collect();
        let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
        Ok(Table { header, rows })
    }

    /// Numeric column by name; non-numeric cells are an error.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Contract(format!("no column '{name}'")))?;
        self.rows
            .iter()
            .map(|r| {
                r.get(idx)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Contract(format!("non-numeric cell in column '{name}'")))
            })
            .collect()
    }
}

/// Mean of the last `k` entries (all entries if fewer).
pub fn tail_mean(values: &[f64], k: usize) -> f64 {
    let tail = &values[values.len().saturating_sub(k)..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().sum::<f64>() / tail.len() as f64
}
