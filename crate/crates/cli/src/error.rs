use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Csv { .. } => 2,
            CliError::Config(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn estimator_is_config(e: &mide::estimator::EstimatorError) -> bool {
    use mide::empirical::EmpiricalError as Em;
    use mide::estimator::EstimatorError as Es;
    matches!(
        e,
        Es::EmptyGrid
            | Es::ThetaDimension { .. }
            | Es::InvalidTolerance(_)
            | Es::PairedSizes { .. }
            | Es::GridTooLarge { .. }
            | Es::Empirical(Em::ThetaDimension { .. } | Em::DataDimension { .. } | Em::ZeroSampleSize)
    )
}

/// Library errors caused by inconsistent input map to the configuration exit
/// code, everything else to the numerical one.
impl From<mide::Error> for CliError {
    fn from(e: mide::Error) -> Self {
        use mide::empirical::EmpiricalError as Em;
        use mide::experiment::ExperimentError as Ex;
        use mide::inference::InferenceError as In;
        use mide::transport::TransportError as Tr;
        let config = match &e {
            mide::Error::Empirical(Em::ThetaDimension { .. } | Em::DataDimension { .. } | Em::ZeroSampleSize) => true,
            mide::Error::Estimator(inner) | mide::Error::Experiment(Ex::Estimator(inner)) => estimator_is_config(inner),
            mide::Error::Inference(In::InvalidDraws { .. } | In::TooFewObservations { .. }) => true,
            mide::Error::Transport(
                Tr::Infeasible { .. }
                | Tr::BadWeight { .. }
                | Tr::Shape { .. }
                | Tr::InvalidTolerance(_)
                | Tr::PaperCijSizes { .. },
            ) => true,
            mide::Error::Experiment(Ex::InvalidTheta(_) | Ex::ZeroSize { .. }) => true,
            mide::Error::Kernel(_) => true,
            _ => false,
        };
        match e {
            mide::Error::Experiment(Ex::Io { path, source }) => CliError::Io { path, source },
            e if config => CliError::Config(e.to_string()),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

macro_rules! via_library_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                mide::Error::from(e).into()
            }
        }
    )*};
}

via_library_error!(
    mide::empirical::EmpiricalError,
    mide::estimator::EstimatorError,
    mide::experiment::ExperimentError,
    mide::inference::InferenceError,
    mide::kernels::KernelError,
    mide::transport::TransportError,
    mide::mmd::MmdError
);
