//! JSON checkpoints. Floats are written in round-trip form, so a loaded
//! checkpoint is bit-identical to the saved state.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algos::Learner;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Last completed epoch.
    pub epoch: usize,
    pub seed: u64,
    /// Resolved configuration text the run was started with.
    pub config: String,
    pub learner: Learner,
    pub cumulative_cost: f64,
    pub cumulative_steps: usize,
}

pub fn checkpoint_path(run_dir: &Path, epoch: usize) -> PathBuf {
    run_dir.join("checkpoints").join(format!("epoch_{epoch:04}"))
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Contract(format!(
                "{}: checkpoint version {} is not supported",
                path.display(),
                ck.version
            )));
        }
        Ok(ck)
    }

    /// The highest-numbered checkpoint in a run directory.
    pub fn latest(run_dir: &Path) -> Result<Option<PathBuf>> {
        let dir = run_dir.join("checkpoints");
        if !dir.exists() {
            return Ok(None);
        }
        let mut best: Option<(usize, PathBuf)> = None;
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            let epoch = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_prefix("epoch_"))
                .and_then(|n| n.parse::<usize>().ok());
            if let Some(e) = epoch {
                if best.as_ref().is_none_or(|(b, _)| e > *b) {
                    best = Some((e, path));
                }
            }
        }
        Ok(best.map(|(_, p)| p))
    }
}
