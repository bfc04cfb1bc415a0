//! Feature extraction: deviation signals, completion-time predictors and
//! the regression target.

mod completion;
mod deviation;
mod target;

pub use completion::{
    extract_all, extract_completion_features, historical_entropy, write_completion_csv, CompletionFeatureVector,
    HistoryConfig, HistoryDefaults, COMPLETION_FIELDS,
};
pub use deviation::{extract_deviation_features, file_type, write_deviation_csv, DeviationFeatureVector, DEVIATION_FIELDS};
pub use target::{completion_time, normalize_target, TargetTransform, TargetValue};

use chrono::{DateTime, Utc};

pub(crate) fn hours_between(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    (to - from).num_milliseconds() as f64 / 3_600_000.0
}
