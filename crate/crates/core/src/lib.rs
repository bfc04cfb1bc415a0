//! Merge-request deviation analytics: forge ingestion, feature extraction,
//! rule-based deviation detection, tree-ensemble completion-time models and
//! the statistics used to compare them.

pub mod classifier;
pub mod error;
pub mod impact;
pub mod ingest;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod stats;
pub mod synth;
pub mod taxonomy;

pub use error::{Error, Result};
pub use impact::{run_deviation_vs_regular, run_impact, ImpactConfig, ImpactReport, InterpretationReport};
pub use ingest::{Corpus, CorpusMeta, MergeRequestRecord, MrState, ProjectMeta};
pub use matrix::FeatureMatrix;
pub use metrics::{CompletionFeatureVector, DeviationFeatureVector};
pub use models::{EnsembleKind, EnsembleSpec, EvalMetrics, ImportanceVector, Model};
pub use stats::{EffectSizeLabel, Magnitude, RankTable};
pub use taxonomy::{Category, DeviationVerdict, PrevalenceReport, RuleConfig};
