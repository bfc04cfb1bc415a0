use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{cohens_d, mean, rank_sum_test, RankEntry, RankTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTest {
    /// Two-sided rank-sum test between the pooled observations of the halves.
    RankSum,
    /// Classic likelihood-ratio statistic against a chi-square reference.
    LikelihoodRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScottKnottConfig {
    pub alpha: f64,
    pub test: SplitTest,
    /// Adjacent groups whose |d| is at or below this are merged.
    pub negligible_effect: f64,
}

impl Default for ScottKnottConfig {
    fn default() -> Self {
        ScottKnottConfig {
            alpha: 0.05,
            test: SplitTest::RankSum,
            negligible_effect: 0.147,
        }
    }
}

struct Item<'a> {
    name: &'a str,
    values: &'a [f64],
    mean: f64,
}

fn pooled<'a>(items: &[Item<'a>]) -> Vec<f64> {
    items.iter().flat_map(|i| i.values.iter().copied()).collect()
}

/// Split point maximizing the between-group sum of squares.
fn best_split(items: &[Item]) -> (usize, f64) {
    let weights: Vec<f64> = items.iter().map(|i| i.values.len() as f64).collect();
    let total_w: f64 = weights.iter().sum();
    let grand = items.iter().zip(&weights).map(|(i, w)| i.mean * w).sum::<f64>() / total_w;
    let (mut best_k, mut best_b) = (1, f64::NEG_INFINITY);
    let (mut w1, mut s1) = (0.0, 0.0);
    for k in 1..items.len() {
        w1 += weights[k - 1];
        s1 += items[k - 1].mean * weights[k - 1];
        let w2 = total_w - w1;
        let m1 = s1 / w1;
        let m2 = (grand * total_w - s1) / w2;
        let b = w1 * (m1 - grand).powi(2) + w2 * (m2 - grand).powi(2);
        if b > best_b + 1e-12 {
            best_b = b;
            best_k = k;
        }
    }
    (best_k, best_b)
}

fn likelihood_ratio_p(items: &[Item], k: usize) -> f64 {
    let g = items.len() as f64;
    let means: Vec<f64> = items.iter().map(|i| i.mean).collect();
    let grand = mean(&means);
    let b0 = {
        let m1 = mean(&means[..k]);
        let m2 = mean(&means[k..]);
        k as f64 * (m1 - grand).powi(2) + (items.len() - k) as f64 * (m2 - grand).powi(2)
    };
    let (mut ss_within, mut obs) = (0.0, 0usize);
    for i in items {
        ss_within += i.values.iter().map(|v| (v - i.mean).powi(2)).sum::<f64>();
        obs += i.values.len();
    }
    let dof = (obs - items.len()) as f64;
    let r = obs as f64 / g;
    let s2 = if dof > 0.0 { ss_within / dof / r } else { 0.0 };
    let sigma2 = (means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() + dof * s2) / (g + dof);
    if sigma2 <= 0.0 {
        return if b0 > 0.0 { 0.0 } else { 1.0 };
    }
    let lambda = PI / (2.0 * (PI - 2.0)) * b0 / sigma2;
    let chi = ChiSquared::new(g / (PI - 2.0)).expect("positive degrees of freedom");
    chi.sf(lambda)
}

fn partition(items: &[Item], offset: usize, config: &ScottKnottConfig, cuts: &mut Vec<usize>) -> Result<()> {
    if items.len() < 2 {
        return Ok(());
    }
    let (k, b) = best_split(items);
    if b <= 0.0 {
        return Ok(());
    }
    let p = match config.test {
        SplitTest::RankSum => rank_sum_test(&pooled(&items[..k]), &pooled(&items[k..]))?.p_value,
        SplitTest::LikelihoodRatio => likelihood_ratio_p(items, k),
    };
    if p > config.alpha {
        return Ok(());
    }
    cuts.push(offset + k);
    partition(&items[..k], offset, config, cuts)?;
    partition(&items[k..], offset + k, config, cuts)
}

fn effect(a: &[f64], b: &[f64]) -> f64 {
    match cohens_d(a, b) {
        Ok(d) => d.abs(),
        // no spread to standardize by: compare locations only
        Err(_) if mean(a) == mean(b) => 0.0,
        Err(_) => f64::INFINITY,
    }
}

/// Rank items (highest mean first) into statistically distinct groups, then
/// merge adjacent groups with a negligible effect size.
pub fn scott_knott_esd(samples: &[(String, Vec<f64>)], config: &ScottKnottConfig) -> Result<RankTable> {
    if samples.is_empty() {
        return Err(Error::domain("Scott-Knott needs at least one item"));
    }
    let mut seen = BTreeSet::new();
    for (name, values) in samples {
        if !seen.insert(name.as_str()) {
            return Err(Error::domain(format!("item {name} listed twice")));
        }
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("item {name} needs finite observations")));
        }
    }
    let mut items: Vec<Item> = samples
        .iter()
        .map(|(name, values)| Item { name, values, mean: mean(values) })
        .collect();
    items.sort_by(|a, b| b.mean.total_cmp(&a.mean).then_with(|| a.name.cmp(b.name)));

    let mut cuts = Vec::new();
    partition(&items, 0, config, &mut cuts)?;
    cuts.sort_unstable();
    let mut bounds: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for c in cuts.into_iter().chain(std::iter::once(items.len())) {
        bounds.push((start, c));
        start = c;
    }

    loop {
        let mut best: Option<(usize, f64)> = None;
        for g in 0..bounds.len().saturating_sub(1) {
            let a = pooled(&items[bounds[g].0..bounds[g].1]);
            let b = pooled(&items[bounds[g + 1].0..bounds[g + 1].1]);
            let d = effect(&a, &b);
            if d <= config.negligible_effect && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((g, d));
            }
        }
        match best {
            Some((g, _)) => {
                bounds[g].1 = bounds[g + 1].1;
                bounds.remove(g + 1);
            }
            None => break,
        }
    }

    let mut entries = Vec::with_capacity(items.len());
    for (rank, (lo, hi)) in bounds.iter().enumerate() {
        for item in &items[*lo..*hi] {
            entries.push(RankEntry {
                name: item.name.to_string(),
                rank: rank as u32 + 1,
                score: item.mean,
            });
        }
    }
    RankTable::new(entries)
}
