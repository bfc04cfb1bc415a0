//! Rank correlation, effect sizes, signed-rank and rank-sum tests,
//! Scott-Knott ESD ranking, collinearity filters and bootstrap splits.

mod bootstrap;
mod collinearity;
mod effect;
mod improvement;
mod rank;
mod scott_knott;
mod wilcoxon;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap_split, BootstrapSplit};
pub use collinearity::{correlation_filter, r_squared_against_rest, redundancy_filter, FilterLog, Removal, RemovalStage};
pub use effect::{cliffs_delta, cliffs_magnitude, cohens_d};
pub use improvement::{improvement_factor, Direction};
pub use rank::{kendall_tau, kendall_tau_b, midranks, spearman, topk_overlap, RankEntry, RankTable};
pub use scott_knott::{scott_knott_esd, ScottKnottConfig, SplitTest};
pub use wilcoxon::{rank_sum_test, wilcoxon_signed_rank, Method, TestOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
    Weak,
    Moderate,
    Strong,
}

impl Magnitude {
    pub fn as_str(self) -> &'static str {
        match self {
            Magnitude::Negligible => "negligible",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
            Magnitude::Weak => "weak",
            Magnitude::Moderate => "moderate",
            Magnitude::Strong => "strong",
        }
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSizeLabel {
    pub value: f64,
    pub magnitude: Magnitude,
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance.
pub(crate) fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
