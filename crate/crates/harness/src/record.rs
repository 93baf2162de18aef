use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ftrl_core::envs::ControlVariant;
use ftrl_core::finetune::EvalReport;
use serde::{Deserialize, Serialize};

use crate::experiments::BenchAlgorithm;
use crate::{ExperimentConfig, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Pretrain,
    Finetune,
    Transfer,
    Sweep,
    Bench,
}

/// What a single run computes; together with the config and seed this is
/// enough to repeat it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum Task {
    Pretrain {
        dataset: String,
        eval_datasets: Vec<String>,
        checkpoint: Option<PathBuf>,
    },
    Finetune {
        pretrain_dataset: String,
        finetune_dataset: String,
        eval_datasets: Vec<String>,
        /// Pre-trained weights to start from; pre-training is repeated
        /// when absent or unreadable.
        checkpoint: Option<PathBuf>,
    },
    Bench {
        variant: ControlVariant,
        algorithm: BenchAlgorithm,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrained,
    Finetuned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedReport {
    pub dataset: String,
    pub stage: Stage,
    pub report: EvalReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Diverged,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub timestep: usize,
    pub mean_reward: Option<f64>,
    pub val_mse: Option<f64>,
    pub val_mae: Option<f64>,
}

/// Deterministic results of executing a [`Task`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub message: Option<String>,
    pub history: Vec<HistoryPoint>,
    pub reports: Vec<NamedReport>,
    /// Mean evaluation return, benchmarks only.
    pub bench_return: Option<f64>,
}

impl RunOutcome {
    pub(crate) fn failed(message: String) -> Self {
        Self {
            status: RunStatus::Failed,
            message: Some(message),
            history: Vec::new(),
            reports: Vec::new(),
            bench_return: None,
        }
    }

    pub fn report(&self, dataset: &str, stage: Stage) -> Option<&EvalReport> {
        self.reports
            .iter()
            .find(|r| r.dataset == dataset && r.stage == stage)
            .map(|r| &r.report)
    }

    /// Compares final metrics bit for bit.
    pub fn same_metrics(&self, other: &RunOutcome) -> Result<(), String> {
        if self.status != other.status {
            return Err(format!("status {:?} vs {:?}", self.status, other.status));
        }
        if self.reports.len() != other.reports.len() {
            return Err(format!("{} reports vs {}", self.reports.len(), other.reports.len()));
        }
        for (a, b) in self.reports.iter().zip(&other.reports) {
            let same = a.dataset == b.dataset
                && a.stage == b.stage
                && a.report.count == b.report.count
                && a.report.mse.to_bits() == b.report.mse.to_bits()
                && a.report.mae.to_bits() == b.report.mae.to_bits();
            if !same {
                return Err(format!(
                    "{} {:?}: mse {} / mae {} vs mse {} / mae {}",
                    a.dataset, a.stage, a.report.mse, a.report.mae, b.report.mse, b.report.mae
                ));
            }
        }
        if self.bench_return.map(f64::to_bits) != other.bench_return.map(f64::to_bits) {
            return Err(format!("return {:?} vs {:?}", self.bench_return, other.bench_return));
        }
        Ok(())
    }
}

/// One persisted run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub experiment: Experiment,
    /// Table coordinates such as `trained_on`, `method` or `value`.
    pub cell: BTreeMap<String, String>,
    pub task: Task,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub code_version: String,
    pub started_at: String,
    pub wall_clock_secs: f64,
    pub outcome: RunOutcome,
}

impl RunRecord {
    pub fn save(&self, dir: &Path) -> Result<PathBuf, HarnessError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.json", self.name));
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn cell(&self, key: &str) -> Option<&str> {
        self.cell.get(key).map(String::as_str)
    }
}
