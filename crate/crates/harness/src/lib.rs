//! Experiment runner behind the `ftrl` command: resolves configuration,
//! executes pre-training, fine-tuning, transfer, sweep and benchmark runs,
//! persists one [`RunRecord`] per run and renders CSV and markdown reports.

mod config;
mod dataset;
mod experiments;
mod record;
mod report;

use thiserror::Error;

pub use config::{BenchConfig, DataConfig, ExperimentConfig, HarnessConfig};
pub use dataset::load_dataset;
pub use experiments::{
    execute, rerun_record, run_bench, run_finetune, run_pretrain, run_sweep, run_transfer, BenchAlgorithm, RunDir, SweepParam,
};
pub use record::{Experiment, NamedReport, RunOutcome, RunRecord, RunStatus, Stage, Task};
pub use report::{emit_report, load_records, Report};

/// Version string recorded with every run.
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("FTRL_GIT_DESCRIBE"));

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("data: {0}")]
    Data(#[from] ftrl_core::data::DataError),
    #[error("backbone: {0}")]
    Backbone(#[from] ftrl_core::backbone::BackboneError),
    #[error("finetune: {0}")]
    Finetune(#[from] ftrl_core::finetune::FinetuneError),
    #[error("algorithm: {0}")]
    Algo(#[from] ftrl_core::algorithms::AlgoError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("report: {0}")]
    Report(String),
    #[error("rerun mismatch: {0}")]
    Mismatch(String),
}

impl HarnessError {
    /// Stable identifier for the machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::InvalidArgument(_) => "invalid_argument",
            HarnessError::Data(_) => "data",
            HarnessError::Backbone(_) => "backbone",
            HarnessError::Finetune(_) => "finetune",
            HarnessError::Algo(_) => "algorithm",
            HarnessError::Io(_) => "io",
            HarnessError::Csv(_) => "csv",
            HarnessError::Json(_) => "json",
            HarnessError::Report(_) => "report",
            HarnessError::Mismatch(_) => "mismatch",
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "status": "error",
            "kind": self.kind(),
            "message": self.to_string(),
        })
        .to_string()
    }
}
