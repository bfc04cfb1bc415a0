use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::Corpus;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePlan {
    pub population: u64,
    pub z: f64,
    pub margin: f64,
    pub proportion: f64,
    /// Infinite-population size `z² p (1-p) / c²`.
    pub unadjusted: f64,
    /// After finite population correction, rounded up.
    pub size: u64,
}

/// Cochran sample size with finite population correction:
/// `ceil(s / (1 + (s - 1) / N))`.
pub fn sample_size(population: u64, z: f64, margin: f64, proportion: f64) -> Result<SamplePlan> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::domain(format!("margin must lie in (0,1), got {margin}")));
    }
    if !(proportion > 0.0 && proportion < 1.0) {
        return Err(Error::domain(format!("proportion must lie in (0,1), got {proportion}")));
    }
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::domain(format!("z must be positive, got {z}")));
    }
    let s = z * z * proportion * (1.0 - proportion) / (margin * margin);
    let size = if population == 0 {
        0
    } else {
        let corrected = s / (1.0 + (s - 1.0) / population as f64);
        // guard against 363.0000000001 style float noise before ceil
        let rounded = (corrected - 1e-9).ceil().max(1.0) as u64;
        rounded.min(population)
    };
    Ok(SamplePlan {
        population,
        z,
        margin,
        proportion,
        unadjusted: s,
        size,
    })
}

/// Uniform sample of MR ids without replacement, optionally stratified by
/// project with largest-remainder quotas. Returned ids are sorted.
pub fn draw_sample(corpus: &Corpus, size: usize, seed: u64, stratify_by_project: bool) -> Result<Vec<u64>> {
    let n = corpus.len();
    if size > n {
        return Err(Error::domain(format!("sample of {size} exceeds population of {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    if stratify_by_project {
        for r in &corpus.records {
            strata.entry(r.project_id).or_default().push(r.id);
        }
    } else {
        strata.insert(0, corpus.records.iter().map(|r| r.id).collect());
    }
    for ids in strata.values_mut() {
        ids.sort_unstable();
    }

    let quotas = largest_remainder(&strata.values().map(Vec::len).collect::<Vec<_>>(), size);
    let mut picked = Vec::with_capacity(size);
    for (ids, quota) in strata.values().zip(quotas) {
        picked.extend(index::sample(&mut rng, ids.len(), quota).into_iter().map(|i| ids[i]));
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Uniform sample of 1-based positions in a population known only by its
/// size, for annotating an external MR list. Returned positions are sorted.
pub fn draw_positions(population: u64, size: u64, seed: u64) -> Result<Vec<u64>> {
    if size > population {
        return Err(Error::domain(format!("sample of {size} exceeds population of {population}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<u64> = index::sample(&mut rng, population as usize, size as usize)
        .into_iter()
        .map(|i| i as u64 + 1)
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Proportional integer quotas summing to `total`; leftover seats go to the
/// largest fractional parts, ties to the earlier stratum.
fn largest_remainder(counts: &[usize], total: usize) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return vec![0; counts.len()];
    }
    let exact: Vec<f64> = counts.iter().map(|&c| c as f64 * total as f64 / n as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut left = total - quotas.iter().sum::<usize>();
    for i in order {
        if left == 0 {
            break;
        }
        if quotas[i] < counts[i] {
            quotas[i] += 1;
            left -= 1;
        }
    }
    quotas
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::fixtures::*;
    use crate::ingest::CorpusMeta;
    use proptest::prelude::*;

    fn size(n: u64) -> u64 {
        sample_size(n, 1.96, 0.05, 0.5).unwrap().size
    }

    #[test]
    fn reference_sizes() {
        assert_eq!(size(6344), 363);
        assert_eq!(size(1), 1);
        assert_eq!(size(1_000_000_000), 385);
        assert_eq!(size(0), 0);
    }

    #[test]
    fn domain_errors() {
        assert!(sample_size(10, 1.96, 0.0, 0.5).is_err());
        assert!(sample_size(10, 1.96, 0.05, 1.0).is_err());
    }

    fn corpus(split: &[(u64, u64)]) -> Corpus {
        let mut records = vec![];
        let mut id = 1;
        for &(project, count) in split {
            for _ in 0..count {
                let mut r = record(id);
                r.project_id = project;
                records.push(r);
                id += 1;
            }
        }
        Corpus::new(
            CorpusMeta { host: String::new(), group: "g".into(), projects: vec![], fetched_at: ts(0) },
            records,
        )
        .unwrap()
    }

    #[test]
    fn full_and_deterministic_draws() {
        let c = corpus(&[(1, 30), (2, 20)]);
        let all = draw_sample(&c, 50, 1, false).unwrap();
        assert_eq!(all, (1..=50).collect::<Vec<_>>());
        assert_eq!(draw_sample(&c, 10, 9, false).unwrap(), draw_sample(&c, 10, 9, false).unwrap());
        assert!(draw_sample(&c, 51, 9, false).is_err());
    }

    #[test]
    fn positions_are_distinct_and_in_range() {
        let p = draw_positions(6344, 363, 5).unwrap();
        assert_eq!(p.len(), 363);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert!(p[0] >= 1 && p[362] <= 6344);
        assert_eq!(p, draw_positions(6344, 363, 5).unwrap());
        assert!(draw_positions(3, 4, 0).is_err());
    }

    #[test]
    fn stratified_quotas() {
        let c = corpus(&[(1, 60), (2, 40)]);
        let s = draw_sample(&c, 10, 3, true).unwrap();
        let from_first = s.iter().filter(|&&id| id <= 60).count();
        assert_eq!((from_first, s.len() - from_first), (6, 4));
        assert_eq!(largest_remainder(&[1, 1, 1], 2), vec![1, 1, 0]);
    }

    proptest! {
        #[test]
        fn size_is_monotone_in_population_and_antitone_in_margin(n in 1u64..100_000, dn in 0u64..1000, c in 0.01f64..0.2, dc in 0.0f64..0.1) {
            let a = sample_size(n, 1.96, c, 0.5).unwrap().size;
            prop_assert!(a >= 1 && a <= n);
            prop_assert!(sample_size(n + dn, 1.96, c, 0.5).unwrap().size >= a);
            prop_assert!(sample_size(n, 1.96, (c + dc).min(0.99), 0.5).unwrap().size <= a);
        }
    }
}
