//! Experiment orchestration: run configuration, cross-validation folds, the
//! training loop, checkpoint evaluation, classical-method runs, report
//! files, and the model summary.

mod classical;
mod config;
mod eval;
mod folds;
mod report;
mod summary;
mod train;

pub use classical::{run_classical, Method, View};
pub use config::{config_hash, parse_kv, CorruptPlan, Profile, SynthSetConfig, TrainConfig};
pub use eval::{
    evaluate_model, evaluate_with_mask, model_from_snapshot, snapshot_from_checkpoint, ViewMask,
};
pub use folds::{split_folds, FoldPlan};
pub use report::{ChunkEstimate, RunReport, SkippedChunk};
pub use summary::{model_summary, ModelSummary, REFERENCE_FULL_PARAMS_M, SUMMARY_FRAMES};
pub use train::{chunk_tensors, train_f3mamba, EpochStats, TrainOutcome};

use crate::fusion::FusionError;
use crate::ingest::IngestError;
use crate::nn::{CheckpointError, TensorError};
use crate::rppg::RppgError;
use crate::signal::SignalError;
use crate::synth::SynthError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("too few subjects: {n} for {k} folds")]
    TooFewSubjects { n: usize, k: usize },
    #[error("non-finite loss {value} at epoch {epoch}, optimizer step {step}")]
    NonFiniteLoss { epoch: usize, step: u64, value: f64 },
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("malformed report: {0}")]
    ReportFormat(String),
    #[error("report self-check failed: {0}")]
    SelfCheck(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Rppg(#[from] RppgError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}
