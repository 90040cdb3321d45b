//! Per-run record of stage status, duration and counts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Outcome, PipelineError, Stage};
use crate::codec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub status: StageStatus,
    pub duration_secs: f64,
    #[serde(default)]
    pub counts: BTreeMap<String, u64>,
    #[serde(default)]
    pub failures: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub last_outcome: Outcome,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub stages: BTreeMap<Stage, LedgerEntry>,
}

impl Ledger {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        match std::fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| PipelineError::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(source) => Err(PipelineError::Io {
                path: path.display().to_string(),
                source,
            }),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("ledger serializes");
        bytes.push(b'\n');
        codec::write_atomic(path, &bytes).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn get(&self, stage: Stage) -> Option<&LedgerEntry> {
        self.stages.get(&stage)
    }

    pub fn is_complete(&self, stage: Stage) -> bool {
        self.get(stage).is_some_and(|e| e.status == StageStatus::Completed)
    }

    pub(super) fn entry_mut(&mut self, stage: Stage) -> &mut LedgerEntry {
        self.stages.entry(stage).or_insert(LedgerEntry {
            status: StageStatus::Running,
            duration_secs: 0.0,
            counts: BTreeMap::new(),
            failures: 0,
            error: None,
            last_outcome: Outcome::Ran,
        })
    }

    pub(super) fn mark_running(&mut self, stage: Stage) {
        let e = self.entry_mut(stage);
        e.status = StageStatus::Running;
        e.error = None;
    }

    pub(super) fn mark_complete(&mut self, stage: Stage, secs: f64, counts: BTreeMap<String, u64>, failures: usize) {
        let e = self.entry_mut(stage);
        e.status = StageStatus::Completed;
        e.duration_secs = secs;
        e.counts = counts;
        e.failures = failures;
        e.error = None;
        e.last_outcome = Outcome::Ran;
    }

    pub(super) fn mark_failed(&mut self, stage: Stage, secs: f64, error: &str) {
        let e = self.entry_mut(stage);
        e.status = StageStatus::Failed;
        e.duration_secs = secs;
        e.error = Some(error.to_string());
        e.last_outcome = Outcome::Ran;
    }
}
