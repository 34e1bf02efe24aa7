//! Training loop, experiment drivers and result records.

mod config;
mod experiments;
mod train;

pub use config::{Dataset, Method, NetShape, RunConfig};
pub use experiments::{
    aggregate_csv, grid_search, histogram_csv, lambda_sweep, median, pairing_experiment, run_all, GridSpec,
    LambdaSummary, MethodSummary, PairingVariant, PairingSummary, summarize,
};
pub use train::{
    evaluate_gmm, init_model, pairing_accuracy, train, train_isolated, train_model, EpochStats, PairingEval, RunRecord,
    Status, TrainedModel, TEST_SALT,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Objective(#[from] crate::objectives::ObjectiveError),
    #[error(transparent)]
    Net(#[from] crate::nets::NetError),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
