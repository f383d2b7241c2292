//! Image-level metrics, grouped cross-validation over the configuration
//! grid, and forward-pass benchmarking.

mod bench;
mod cv;
mod metrics;
mod report;

use crate::dataio::DataError;
use crate::network::NetworkError;
use crate::train::TrainError;

pub use bench::{bench_forward, bench_resolutions, BenchResult};
pub use cv::{config_grid, config_label, evaluate_cv, prepare_test, score_samples, ModelSource, TrainOnDemand};
pub use metrics::{
    average_precision, best_f_threshold, fp_at_full_recall, pr_curve, BestF, MetricError, PrPoint, ScoredItem,
    ScoredSet,
};
pub use report::{write_summary_csv, EvalReport, SUMMARY_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: TrainError,
    },
    #[error("no model for fold {fold} of configuration `{config}`")]
    MissingFold { config: String, fold: usize },
}
