use thiserror::Error;

use crate::empirical::EmpiricalError;
use crate::estimator::EstimatorError;
use crate::experiment::ExperimentError;
use crate::inference::InferenceError;
use crate::kernels::KernelError;
use crate::mmd::MmdError;
use crate::points::PointsError;
use crate::transport::TransportError;

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Points(#[from] PointsError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Empirical(#[from] EmpiricalError),
    #[error(transparent)]
    Mmd(#[from] MmdError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
