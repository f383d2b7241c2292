use segdec::dataio::DataError;
use segdec::eval::{EvalError, MetricError};
use segdec::network::{NetworkError, WeightFileError};
use segdec::tensor::TensorError;
use segdec::train::TrainError;

/// Errors mapped to process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("weight file error: {0}")]
    Weights(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Weights(_) => 5,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<WeightFileError> for CliError {
    fn from(e: WeightFileError) -> Self {
        CliError::Weights(e.to_string())
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::Tensor(TensorError::NonFiniteGradient { .. }) => CliError::Numeric(e.to_string()),
            NetworkError::InputSize { .. } | NetworkError::SpatialMismatch { .. } => CliError::Data(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Data(d) => d.into(),
            TrainError::Network(n) => n.into(),
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::EmptyClass(_) => CliError::Data(e.to_string()),
            TrainError::Config(_) => CliError::Config(e.to_string()),
            TrainError::NotFrozen => CliError::Other(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::NonFinite(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Metric(m) => m.into(),
            EvalError::Network(n) => n.into(),
            EvalError::Data(d) => d.into(),
            EvalError::Fold { fold, source } => {
                let inner: CliError = source.into();
                let code = inner.exit_code();
                let msg = format!("fold {fold}: {inner}");
                match code {
                    2 => CliError::Config(msg),
                    3 => CliError::Data(msg),
                    4 => CliError::Numeric(msg),
                    _ => CliError::Other(msg),
                }
            }
            EvalError::MissingFold { .. } => CliError::Weights(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}
