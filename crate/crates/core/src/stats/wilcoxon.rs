use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::midranks;
use crate::error::{Error, Result};

const EXACT_SIGNED_MAX: usize = 25;
const EXACT_RANK_SUM_MAX: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Normal,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    /// Observations that entered the test (non-zero differences for the
    /// signed-rank test, n1 + n2 for the rank-sum test).
    pub n: usize,
    pub method: Method,
}

impl TestOutcome {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

fn two_sided_normal(z: f64) -> f64 {
    let std = Normal::standard();
    (2.0 * std.sf(z.abs())).min(1.0)
}

fn tie_term(sorted_abs: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted_abs.len() {
        let mut j = i;
        while j + 1 < sorted_abs.len() && sorted_abs[j + 1] == sorted_abs[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        total += t * t * t - t;
        i = j + 1;
    }
    total
}

/// Paired two-sided signed-rank test on `a - b`. Zero differences are
/// dropped. The statistic is the positive rank sum.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    if a.len() != b.len() {
        return Err(Error::domain(format!(
            "paired test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::domain("paired test received a non-finite value"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(TestOutcome { statistic: 0.0, p_value: 1.0, n: 0, method: Method::Degenerate });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    if n <= EXACT_SIGNED_MAX {
        // Doubled mid-ranks are integers, so the conditional null
        // distribution is a subset-sum count.
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0f64; total + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let all = 2f64.powi(n as i32);
        let w2 = (w_plus * 2.0).round() as usize;
        let lower: f64 = counts[..=w2].iter().sum::<f64>() / all;
        let upper: f64 = counts[w2..].iter().sum::<f64>() / all;
        let p = (2.0 * lower.min(upper)).min(1.0);
        return Ok(TestOutcome { statistic: w_plus, p_value: p, n, method: Method::Exact });
    }

    let nf = n as f64;
    let mu = nf * (nf + 1.0) / 4.0;
    let mut sorted = abs;
    sorted.sort_by(f64::total_cmp);
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&sorted) / 48.0;
    let dev = w_plus - mu;
    let z = (dev.abs() - 0.5).max(0.0) / var.sqrt();
    Ok(TestOutcome { statistic: w_plus, p_value: two_sided_normal(z), n, method: Method::Normal })
}

/// Two-sided Mann-Whitney rank-sum test. The statistic is U for `a`.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("rank-sum test needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::domain("rank-sum test received a non-finite value"));
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let n = n1 + n2;

    let mut sorted = pooled;
    sorted.sort_by(f64::total_cmp);
    let ties = tie_term(&sorted);
    if ties == 0.0 && n <= EXACT_RANK_SUM_MAX {
        let dist = mann_whitney_counts(n1, n2);
        let all: f64 = dist.iter().sum();
        let ui = u.round() as usize;
        let lower = dist[..=ui].iter().sum::<f64>() / all;
        let upper = dist[ui..].iter().sum::<f64>() / all;
        let p = (2.0 * lower.min(upper)).min(1.0);
        return Ok(TestOutcome { statistic: u, p_value: p, n, method: Method::Exact });
    }

    let (f1, f2, nf) = (n1 as f64, n2 as f64, n as f64);
    let var = f1 * f2 / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(TestOutcome { statistic: u, p_value: 1.0, n, method: Method::Degenerate });
    }
    let dev = u - f1 * f2 / 2.0;
    let z = (dev.abs() - 0.5).max(0.0) / var.sqrt();
    Ok(TestOutcome { statistic: u, p_value: two_sided_normal(z), n, method: Method::Normal })
}

/// Number of arrangements giving each U value for sample sizes n1, n2.
fn mann_whitney_counts(n1: usize, n2: usize) -> Vec<f64> {
    let max_u = n1 * n2;
    // table[i][j] = distribution for sizes (i, j)
    let mut prev: Vec<Vec<f64>> = (0..=n2).map(|_| vec![1.0]).collect();
    for i in 1..=n1 {
        let mut cur: Vec<Vec<f64>> = Vec::with_capacity(n2 + 1);
        cur.push(vec![1.0]);
        for j in 1..=n2 {
            let mut d = vec![0.0; i * j + 1];
            // largest value belongs to the first sample: adds j to U
            for (u, c) in prev[j].iter().enumerate() {
                d[u + j] += c;
            }
            for (u, c) in cur[j - 1].iter().enumerate() {
                d[u] += c;
            }
            cur.push(d);
        }
        prev = cur;
    }
    let mut out = prev.swap_remove(n2);
    out.resize(max_u + 1, 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn enumerate_signed(diffs: &[f64]) -> f64 {
        let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
        let n = nz.len();
        let ranks = midranks(&nz.iter().map(|d| d.abs()).collect::<Vec<_>>());
        let observed: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if w <= observed + 1e-9 {
                le += 1;
            }
            if w >= observed - 1e-9 {
                ge += 1;
            }
        }
        (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
    }

    fn enumerate_rank_sum(a: &[f64], b: &[f64]) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let n = pooled.len();
        let ranks = midranks(&pooled);
        let observed: f64 = ranks[..a.len()].iter().sum();
        let (mut le, mut ge, mut all) = (0u64, 0u64, 0u64);
        for mask in 0u64..(1 << n) {
            if mask.count_ones() as usize != a.len() {
                continue;
            }
            all += 1;
            let r: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if r <= observed + 1e-9 {
                le += 1;
            }
            if r >= observed - 1e-9 {
                ge += 1;
            }
        }
        (2.0 * le.min(ge) as f64 / all as f64).min(1.0)
    }

    #[test]
    fn all_zero_differences() {
        let t = wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((t.p_value, t.n), (1.0, 0));
    }

    #[test]
    fn smallest_exact_p() {
        // eight positive differences: p = 2 / 2^8
        let a: Vec<f64> = (1..=8).map(f64::from).collect();
        let t = wilcoxon_signed_rank(&a, &[0.0; 8]).unwrap();
        assert_eq!(t.statistic, 36.0);
        assert!((t.p_value - 2.0 / 256.0).abs() < 1e-15);
    }

    #[test]
    fn normal_branch_close_to_enumeration_boundary() {
        let a: Vec<f64> = (0..26).map(|i| (i as f64 * 0.37).sin() + 0.3).collect();
        let b = vec![0.0; 26];
        let t = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(t.method, Method::Normal);
        let exact = wilcoxon_signed_rank(&a[..25], &b[..25]).unwrap();
        assert_eq!(exact.method, Method::Exact);
        assert!(t.p_value > 0.0 && t.p_value < 0.2 && exact.p_value < 0.2);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(wilcoxon_signed_rank(&[1.0], &[]).unwrap_err().class(), "domain");
        assert!(rank_sum_test(&[], &[1.0]).is_err());
    }

    #[test]
    fn rank_sum_separated() {
        let t = rank_sum_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert!((t.p_value - 0.1).abs() < 1e-12);
        let t = rank_sum_test(&[3.0; 40], &[3.0; 40]).unwrap();
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn rank_sum_large_sample_shift() {
        let a: Vec<f64> = (0..100).map(f64::from).collect();
        let b: Vec<f64> = (0..100).map(|i| f64::from(i) + 40.0).collect();
        let t = rank_sum_test(&a, &b).unwrap();
        assert_eq!(t.method, Method::Normal);
        assert!(t.p_value < 1e-10);
    }

    #[test]
    fn shifted_pair_is_significant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut normal = || {
            let (u1, u2): (f64, f64) = (rng.random_range(f64::EPSILON..1.0), rng.random());
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let a: Vec<f64> = (0..100).map(|_| normal()).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 0.5 + 0.5 * normal()).collect();
        let t = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(t.significant(0.05), "p = {}", t.p_value);
    }

    proptest! {
        #[test]
        fn signed_rank_matches_enumeration(d in prop::collection::vec(-4i32..=4, 1..=12)) {
            let a: Vec<f64> = d.iter().map(|v| f64::from(*v)).collect();
            let t = wilcoxon_signed_rank(&a, &vec![0.0; a.len()]).unwrap();
            prop_assert!((t.p_value - enumerate_signed(&a)).abs() < 1e-12);
            prop_assert!(t.p_value > 0.0 && t.p_value <= 1.0);
        }

        #[test]
        fn rank_sum_matches_enumeration(
            a in prop::collection::vec(0.0f64..100.0, 1..=6),
            b in prop::collection::vec(0.0f64..100.0, 1..=6),
        ) {
            let t = rank_sum_test(&a, &b).unwrap();
            prop_assert!((t.p_value - enumerate_rank_sum(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn signed_rank_antisymmetric(d in prop::collection::vec(-50.0f64..50.0, 1..40)) {
            let z = vec![0.0; d.len()];
            let p1 = wilcoxon_signed_rank(&d, &z).unwrap().p_value;
            let p2 = wilcoxon_signed_rank(&z, &d).unwrap().p_value;
            prop_assert!((p1 - p2).abs() < 1e-12);
        }
    }
}
