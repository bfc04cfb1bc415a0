//! Tree-ensemble regressors, evaluation metrics and feature importance.

mod eval;
mod importance;
mod tree;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use tree::{fit_tree, SplitRule, Tree, TreeParams};

pub use eval::{eval_metrics, EvalMetrics, GUESS_ROUNDS};
pub use importance::{impurity_importance, permutation_importance, ImportanceMethod, ImportanceVector};

pub const MODEL_FORMAT: &str = "mrscope-model/1";
const MIN_TRAIN_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Bootstrap-aggregated trees with best-threshold splits (random forest).
    BaggedRandomTrees,
    /// Bootstrap-aggregated trees with random thresholds (extra trees).
    ExtraRandomTrees,
    /// Stagewise squared-loss boosting.
    GradientBoostedTrees,
}

impl EnsembleKind {
    pub const ALL: [EnsembleKind; 3] = [
        EnsembleKind::ExtraRandomTrees,
        EnsembleKind::GradientBoostedTrees,
        EnsembleKind::BaggedRandomTrees,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnsembleKind::BaggedRandomTrees => "bagged_random_trees",
            EnsembleKind::ExtraRandomTrees => "extra_random_trees",
            EnsembleKind::GradientBoostedTrees => "gradient_boosted_trees",
        }
    }

    /// Short label for tables.
    pub fn short(self) -> &'static str {
        match self {
            EnsembleKind::BaggedRandomTrees => "RF",
            EnsembleKind::ExtraRandomTrees => "ET",
            EnsembleKind::GradientBoostedTrees => "GBT",
        }
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bagged_random_trees" | "rf" | "RF" => Ok(EnsembleKind::BaggedRandomTrees),
            "extra_random_trees" | "et" | "ET" => Ok(EnsembleKind::ExtraRandomTrees),
            "gradient_boosted_trees" | "gbt" | "GBT" => Ok(EnsembleKind::GradientBoostedTrees),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    /// Defaults to 12 for bagged/extra and 6 for boosted.
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Fraction of features examined per split. Defaults to sqrt(p)/p for
    /// bagged/extra and 1 for boosted.
    #[serde(default)]
    pub feature_subsample: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_trees() -> usize {
    100
}
fn default_min_leaf() -> usize {
    5
}
fn default_learning_rate() -> f64 {
    0.1
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, seed: u64) -> Self {
        EnsembleSpec {
            kind,
            n_trees: default_trees(),
            max_depth: None,
            min_leaf: default_min_leaf(),
            learning_rate: default_learning_rate(),
            feature_subsample: None,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        EnsembleSpec { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!("learning_rate {} outside (0,1]", self.learning_rate)));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be at least 1".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if let Some(f) = self.feature_subsample {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("feature_subsample {f} outside (0,1]")));
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.max_depth.unwrap_or(match self.kind {
            EnsembleKind::GradientBoostedTrees => 6,
            _ => 12,
        })
    }

    fn mtry(&self, p: usize) -> usize {
        let frac = self.feature_subsample.unwrap_or(match self.kind {
            EnsembleKind::GradientBoostedTrees => 1.0,
            _ => (p as f64).sqrt() / p as f64,
        });
        ((frac * p as f64).ceil() as usize).clamp(1, p)
    }
}

/// A trained ensemble. Immutable and shareable across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub format: String,
    pub spec: EnsembleSpec,
    pub features: Vec<String>,
    base: f64,
    trees: Vec<Tree>,
    /// Per-feature squared-error reduction summed over all trees.
    impurity: Vec<f64>,
}

fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Fit an ensemble. Deterministic for a given spec (including seed) and data.
pub fn train(spec: &EnsembleSpec, x: &FeatureMatrix, y: &[f64]) -> Result<Model> {
    spec.validate()?;
    if x.n_cols() == 0 {
        return Err(Error::domain("cannot train on a matrix with no columns"));
    }
    if x.n_rows() != y.len() {
        return Err(Error::domain(format!("{} rows but {} targets", x.n_rows(), y.len())));
    }
    if y.len() < MIN_TRAIN_ROWS {
        return Err(Error::domain(format!("training needs at least {MIN_TRAIN_ROWS} rows, got {}", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite training target"));
    }
    let columns = x.columns();
    let n = y.len();
    let p = x.n_cols();
    let params = TreeParams {
        max_depth: spec.depth(),
        min_leaf: spec.min_leaf,
        mtry: spec.mtry(p),
        rule: match spec.kind {
            EnsembleKind::ExtraRandomTrees => SplitRule::Random,
            _ => SplitRule::Exact,
        },
    };

    let (base, fitted): (f64, Vec<(Tree, Vec<f64>)>) = match spec.kind {
        EnsembleKind::BaggedRandomTrees | EnsembleKind::ExtraRandomTrees => {
            let fitted = (0..spec.n_trees)
                .into_par_iter()
                .map(|t| {
                    let mut rng = tree_rng(spec.seed, t);
                    let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                    fit_tree(columns, y, &mut rows, params, &mut rng)
                })
                .collect();
            (0.0, fitted)
        }
        EnsembleKind::GradientBoostedTrees => {
            let base = y.iter().sum::<f64>() / n as f64;
            let mut current = vec![base; n];
            let mut residual = vec![0.0; n];
            let mut fitted = Vec::with_capacity(spec.n_trees);
            for t in 0..spec.n_trees {
                for i in 0..n {
                    residual[i] = y[i] - current[i];
                }
                let mut rng = tree_rng(spec.seed, t);
                let mut rows: Vec<usize> = (0..n).collect();
                let (tree, gains) = fit_tree(columns, &residual, &mut rows, params, &mut rng);
                for (i, c) in current.iter_mut().enumerate() {
                    *c += spec.learning_rate * tree.predict(columns, i);
                }
                fitted.push((tree, gains));
            }
            (base, fitted)
        }
    };
    let mut impurity = vec![0.0; p];
    let mut trees = Vec::with_capacity(fitted.len());
    for (tree, gains) in fitted {
        for (acc, g) in impurity.iter_mut().zip(gains) {
            *acc += g;
        }
        trees.push(tree);
    }
    Ok(Model {
        format: MODEL_FORMAT.to_string(),
        spec: spec.clone(),
        features: x.names.clone(),
        base,
        trees,
        impurity,
    })
}

impl Model {
    fn check_schema(&self, x: &FeatureMatrix) -> Result<()> {
        if x.names != self.features {
            return Err(Error::domain(format!(
                "feature columns {:?} do not match the training schema {:?}",
                x.names, self.features
            )));
        }
        Ok(())
    }

    fn predict_row(&self, columns: &[Vec<f64>], row: usize) -> f64 {
        match self.spec.kind {
            EnsembleKind::GradientBoostedTrees => {
                self.base
                    + self
                        .trees
                        .iter()
                        .map(|t| self.spec.learning_rate * t.predict(columns, row))
                        .sum::<f64>()
            }
            _ => self.trees.iter().map(|t| t.predict(columns, row)).sum::<f64>() / self.trees.len() as f64,
        }
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_schema(x)?;
        let columns = x.columns();
        Ok((0..x.n_rows()).map(|i| self.predict_row(columns, i)).collect())
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Config(format!("model serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let model: Model = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            id: None,
            msg: e.to_string(),
        })?;
        if model.format != MODEL_FORMAT {
            return Err(Error::domain(format!("unsupported model format {:?}", model.format)));
        }
        Ok(model)
    }
}

pub fn predict(model: &Model, x: &FeatureMatrix) -> Result<Vec<f64>> {
    model.predict(x)
}
