use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{EffectSizeLabel, Magnitude};
use crate::error::{Error, Result};

/// 1-based ranks with ties replaced by their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of mid-ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::domain(format!(
            "spearman needs equal lengths >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    pearson(&midranks(x), &midranks(y)).ok_or_else(|| Error::undefined("spearman of a constant vector"))
}

/// Kendall's tau-b on paired observations, O(n²).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::domain("kendall tau needs equal lengths >= 2"));
    }
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let dx = x[i].total_cmp(&x[j]) as i64;
            let dy = y[i].total_cmp(&y[j]) as i64;
            if dx == 0 {
                tie_x += 1;
            }
            if dy == 0 {
                tie_y += 1;
            }
            match dx * dy {
                1 => concordant += 1,
                -1 => discordant += 1,
                _ => {}
            }
        }
    }
    let pairs = (x.len() * (x.len() - 1) / 2) as i64;
    let denom = (((pairs - tie_x) * (pairs - tie_y)) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::undefined("kendall tau-b with a fully tied ranking"));
    }
    Ok((concordant - discordant) as f64 / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub name: String,
    /// 1 is best; ties allowed.
    pub rank: u32,
    /// Tie-breaker within a rank (higher first), e.g. mean importance.
    pub score: f64,
}

/// Ranking of named items, kept sorted by (rank, score desc, name).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub entries: Vec<RankEntry>,
}

impl RankTable {
    pub fn new(mut entries: Vec<RankEntry>) -> Result<Self> {
        let names: BTreeSet<&str> = entries.iter().map(|e| e.name.as_str()).collect();
        if names.len() != entries.len() {
            return Err(Error::domain("rank table lists an item twice"));
        }
        let ranks: BTreeSet<u32> = entries.iter().map(|e| e.rank).collect();
        if ranks.iter().copied().ne(1..=ranks.len() as u32) {
            return Err(Error::domain(format!("ranks are not contiguous from 1: {ranks:?}")));
        }
        entries.sort_by(|a, b| {
            a.rank
                .cmp(&b.rank)
                .then(b.score.total_cmp(&a.score))
                .then_with(|| a.name.cmp(&b.name))
        });
        Ok(RankTable { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn rank_of(&self, name: &str) -> Option<u32> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.rank)
    }

    pub fn top(&self, k: usize) -> Vec<&str> {
        self.entries.iter().take(k).map(|e| e.name.as_str()).collect()
    }

    /// Keep only the named items, re-densifying ranks.
    pub fn restrict(&self, keep: &BTreeSet<&str>) -> RankTable {
        let mut kept: Vec<RankEntry> = self
            .entries
            .iter()
            .filter(|e| keep.contains(e.name.as_str()))
            .cloned()
            .collect();
        let distinct: BTreeSet<u32> = kept.iter().map(|e| e.rank).collect();
        for e in &mut kept {
            e.rank = distinct.iter().position(|r| *r == e.rank).unwrap() as u32 + 1;
        }
        RankTable { entries: kept }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["item", "rank", "score"])?;
        for e in &self.entries {
            w.write_record([e.name.clone(), e.rank.to_string(), format!("{}", e.score)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn tau_magnitude(t: f64) -> Magnitude {
    let a = t.abs();
    if a <= 0.3 {
        Magnitude::Weak
    } else if a <= 0.6 {
        Magnitude::Moderate
    } else {
        Magnitude::Strong
    }
}

/// Tau-b between two rankings of the same items. Two fully tied rankings
/// are identical and score 1; a fully tied ranking against a non-tied one
/// carries no order information and scores 0.
pub fn kendall_tau(a: &RankTable, b: &RankTable) -> Result<EffectSizeLabel> {
    if a.names() != b.names() {
        return Err(Error::domain("kendall tau needs rank tables over the same items"));
    }
    if a.len() < 2 {
        return Err(Error::domain("kendall tau needs at least two items"));
    }
    let names: Vec<&str> = a.names().into_iter().collect();
    let ra: Vec<f64> = names.iter().map(|n| f64::from(a.rank_of(n).unwrap())).collect();
    let rb: Vec<f64> = names.iter().map(|n| f64::from(b.rank_of(n).unwrap())).collect();
    let value = match kendall_tau_b(&ra, &rb) {
        Ok(v) => v,
        Err(Error::Undefined(_)) => {
            let flat = |r: &[f64]| r.iter().all(|v| *v == r[0]);
            if flat(&ra) && flat(&rb) {
                1.0
            } else {
                0.0
            }
        }
        Err(e) => return Err(e),
    };
    Ok(EffectSizeLabel {
        value,
        magnitude: tau_magnitude(value),
    })
}

fn overlap_magnitude(j: f64) -> Magnitude {
    if j <= 0.25 {
        Magnitude::Negligible
    } else if j <= 0.5 {
        Magnitude::Small
    } else if j <= 0.75 {
        Magnitude::Medium
    } else {
        Magnitude::Large
    }
}

/// Jaccard index of the two top-k sets.
pub fn topk_overlap(a: &RankTable, b: &RankTable, k: usize) -> Result<EffectSizeLabel> {
    if k == 0 || k > a.len() || k > b.len() {
        return Err(Error::domain(format!(
            "top-{k} needs k in 1..={}",
            a.len().min(b.len())
        )));
    }
    let ta: BTreeSet<&str> = a.top(k).into_iter().collect();
    let tb: BTreeSet<&str> = b.top(k).into_iter().collect();
    let value = ta.intersection(&tb).count() as f64 / ta.union(&tb).count() as f64;
    Ok(EffectSizeLabel {
        value,
        magnitude: overlap_magnitude(value),
    })
}
