use std::path::{Path, PathBuf};

use layerspin_core::layca::LaycaError;
use layerspin_core::nn::ModelError;
use layerspin_core::optim::OptimError;
use layerspin_core::rotation::RotationError;
use layerspin_core::schedules::ScheduleError;
use layerspin_core::tensor::TensorError;
use thiserror::Error;

use crate::data::DataError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Layca(#[from] LaycaError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Rotation(#[from] RotationError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("run {run_id} diverged at epoch {epoch}, step {step} ({reason}); last finite epoch {last_good_epoch}")]
    Diverged {
        run_id: String,
        epoch: usize,
        step: usize,
        last_good_epoch: usize,
        reason: String,
    },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
