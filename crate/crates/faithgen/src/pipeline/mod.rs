//! Run orchestration: a config file plus an output directory become a chain
//! of manifested, idempotent stages (prepare → contrast/bucket → train →
//! generate → evaluate), and reports across runs.

mod config;
mod manifest;
mod report;
mod stages;

pub use config::{
    DataPaths, DecodeSettings, JudgeSettings, ModelSettings, RunConfig, SamplerSettings, TrainSettings,
};
pub use manifest::{sha256_file, sha256_str, RunManifest, StageRecord};
pub use report::{cmd_report, ReportRow};
pub use stages::{
    build_train_items, cmd_bucket, cmd_contrast, cmd_evaluate, cmd_generate, cmd_prepare, cmd_train,
    EvalRecord, EvalSummary, GenerationRecord, TrainLogRecord,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Contrast(#[from] crate::contrast::ContrastError),
    #[error(transparent)]
    Control(#[from] crate::control::ControlError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error("missing upstream artifact {path}: run the {stage} stage first")]
    MissingArtifact { stage: String, path: String },
    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
}

impl PipelineError {
    /// Process exit code: 2 config, 3 data/processing, 4 missing upstream
    /// artifact.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::MissingArtifact { .. } => 4,
            _ => 3,
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            msg: err.to_string(),
        }
    }
}
