//! Training, evaluation, ablation runs and checkpoints.

mod ablation;
mod checkpoint;
mod config;
mod eval;
mod gradcheck;
mod optim;
mod train;

pub use ablation::{run_ablation, AblationReport, AblationRow};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use gradcheck::{example_loss_value, gradient_check, GroupCheck};
pub use eval::{decision_report, evaluate, evaluate_predictions, EvalReport};
pub use optim::{clip_global_norm, global_norm, Adam};
pub use train::{example_gradients, train, EpochMetrics, TrainOutcome, Trainer};

use crate::corpus::CorpusError;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("config error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite loss in epoch {epoch}, batch {batch} (examples {examples}): {detail}")]
    NonFinite { epoch: usize, batch: usize, examples: String, detail: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
