use super::{mean, variance, EffectSizeLabel, Magnitude};
use crate::error::{Error, Result};

/// Magnitude cut-offs shared by Cliff's delta and Cohen's d marks.
pub fn cliffs_magnitude(value: f64) -> Magnitude {
    let a = value.abs();
    if a <= 0.147 {
        Magnitude::Negligible
    } else if a <= 0.33 {
        Magnitude::Small
    } else if a <= 0.474 {
        Magnitude::Medium
    } else {
        Magnitude::Large
    }
}

/// `(#{a > b} - #{a < b}) / (|a| |b|)`, counted in O((n + m) log m).
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<EffectSizeLabel> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("Cliff's delta needs two non-empty samples"));
    }
    let mut sorted = b.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut dominance: i64 = 0;
    for &x in a {
        let below = sorted.partition_point(|&y| y < x);
        let not_above = sorted.partition_point(|&y| y <= x);
        let above = sorted.len() - not_above;
        dominance += below as i64 - above as i64;
    }
    let value = dominance as f64 / (a.len() as f64 * b.len() as f64);
    Ok(EffectSizeLabel {
        value,
        magnitude: cliffs_magnitude(value),
    })
}

/// Standardized mean difference with pooled sample standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::domain("Cohen's d needs at least two values per sample"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = ((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0);
    if !(pooled > 0.0) {
        return Err(Error::undefined("Cohen's d with zero pooled variance"));
    }
    Ok((mean(a) - mean(b)) / pooled.sqrt())
}
