use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::midranks;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Diagonal jitter that keeps the correlation matrix invertible when
/// features are exact linear combinations of each other.
const RIDGE: f64 = 1e-8;
const R2_TIE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalStage {
    Constant,
    Correlation,
    Redundancy,
}

impl RemovalStage {
    pub fn as_str(self) -> &'static str {
        match self {
            RemovalStage::Constant => "constant",
            RemovalStage::Correlation => "correlation",
            RemovalStage::Redundancy => "redundancy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub feature: String,
    pub stage: RemovalStage,
    /// |rho| of the offending pair, or R² against the remaining features.
    pub value: f64,
    /// The other member of the offending pair for correlation drops.
    pub partner: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterLog {
    pub kept: Vec<String>,
    pub removed: Vec<Removal>,
}

impl FilterLog {
    pub fn removed_names(&self) -> Vec<&str> {
        self.removed.iter().map(|r| r.feature.as_str()).collect()
    }

    /// Concatenate a later stage onto this one.
    pub fn then(mut self, next: FilterLog) -> FilterLog {
        self.removed.extend(next.removed);
        self.kept = next.kept;
        self
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "stage", "value", "partner"])?;
        for r in &self.removed {
            w.write_record([
                r.feature.as_str(),
                r.stage.as_str(),
                &format!("{}", r.value),
                r.partner.as_deref().unwrap_or(""),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn is_constant(col: &[f64]) -> bool {
    col.iter().all(|v| *v == col[0])
}

/// Pearson correlation matrix of the given columns (none constant).
fn correlation_matrix(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let n = cols[0].len();
    let p = cols.len();
    let mut z = DMatrix::<f64>::zeros(n, p);
    for (j, col) in cols.iter().enumerate() {
        let m = col.iter().sum::<f64>() / n as f64;
        let ss = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>().sqrt();
        for (i, v) in col.iter().enumerate() {
            z[(i, j)] = (v - m) / ss;
        }
    }
    let mut r = z.transpose() * z;
    for j in 0..p {
        r[(j, j)] = 1.0;
    }
    r
}

fn split_constant(matrix: &FeatureMatrix, log: &mut FilterLog) -> Vec<usize> {
    let mut live = Vec::new();
    for (j, name) in matrix.names.iter().enumerate() {
        if is_constant(matrix.column(j)) {
            log.removed.push(Removal {
                feature: name.clone(),
                stage: RemovalStage::Constant,
                value: 0.0,
                partner: None,
            });
        } else {
            live.push(j);
        }
    }
    live
}

/// Drop features until no remaining pair has Spearman |rho| above
/// `threshold`. Constant columns carry no rank information and go first.
pub fn correlation_filter(matrix: &FeatureMatrix, threshold: f64) -> Result<FilterLog> {
    if matrix.n_rows() < 2 {
        return Err(Error::domain("correlation filter needs at least two rows"));
    }
    let mut log = FilterLog::default();
    let mut live = split_constant(matrix, &mut log);
    if live.is_empty() {
        return Ok(log);
    }
    let ranked: Vec<Vec<f64>> = live.iter().map(|&j| midranks(matrix.column(j))).collect();
    let rho = correlation_matrix(&ranked).map(f64::abs);
    let name = |k: usize| &matrix.names[live[k]];
    // positions into `ranked`, parallel to `live`
    let mut alive: Vec<usize> = (0..live.len()).collect();

    loop {
        let mut worst: Option<(usize, usize, f64)> = None;
        for (x, &a) in alive.iter().enumerate() {
            for &b in &alive[x + 1..] {
                let r = rho[(a, b)];
                if r > threshold && worst.is_none_or(|(_, _, w)| r > w) {
                    worst = Some((a, b, r));
                }
            }
        }
        let Some((a, b, r)) = worst else { break };
        let mean_abs = |k: usize| {
            let others: Vec<f64> = alive.iter().filter(|&&o| o != k).map(|&o| rho[(k, o)]).collect();
            others.iter().sum::<f64>() / others.len() as f64
        };
        let (ma, mb) = (mean_abs(a), mean_abs(b));
        let later = if name(a) > name(b) { a } else { b };
        let drop = if (ma - mb).abs() <= 1e-12 {
            later
        } else if ma > mb {
            a
        } else {
            b
        };
        let partner = if drop == a { b } else { a };
        log.removed.push(Removal {
            feature: name(drop).clone(),
            stage: RemovalStage::Correlation,
            value: r,
            partner: Some(name(partner).clone()),
        });
        alive.retain(|&k| k != drop);
    }
    live = alive.iter().map(|&k| live[k]).collect();
    log.kept = live.iter().map(|&j| matrix.names[j].clone()).collect();
    Ok(log)
}

/// R² of an OLS fit (with intercept) of each named feature on all the others,
/// via the inverse of the ridge-jittered correlation matrix.
pub fn r_squared_against_rest(matrix: &FeatureMatrix, names: &[String]) -> Result<Vec<(String, f64)>> {
    let mut cols = Vec::with_capacity(names.len());
    for n in names {
        let col = matrix
            .column_by_name(n)
            .ok_or_else(|| Error::domain(format!("unknown feature {n}")))?;
        if is_constant(col) {
            return Err(Error::undefined(format!("feature {n} is constant")));
        }
        cols.push(col.to_vec());
    }
    if cols.len() < 2 {
        return Ok(names.iter().map(|n| (n.clone(), 0.0)).collect());
    }
    let mut r = correlation_matrix(&cols);
    for j in 0..cols.len() {
        r[(j, j)] += RIDGE;
    }
    let inv = r
        .try_inverse()
        .ok_or_else(|| Error::undefined("correlation matrix is singular even with ridge jitter"))?;
    Ok(names
        .iter()
        .enumerate()
        .map(|(j, n)| (n.clone(), (1.0 - 1.0 / inv[(j, j)]).clamp(0.0, 1.0)))
        .collect())
}

/// Drop the most redundant feature while its R² against the rest reaches
/// `r2_threshold`. Near-ties go to the lexicographically later name.
pub fn redundancy_filter(matrix: &FeatureMatrix, r2_threshold: f64) -> Result<FilterLog> {
    let mut log = FilterLog::default();
    let live = split_constant(matrix, &mut log);
    let mut kept: Vec<String> = live.iter().map(|&j| matrix.names[j].clone()).collect();
    while kept.len() >= 2 {
        let r2 = r_squared_against_rest(matrix, &kept)?;
        let top = r2.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
        if top < r2_threshold {
            break;
        }
        let (drop, value) = r2
            .iter()
            .filter(|(_, v)| top - v <= R2_TIE)
            .max_by(|a, b| a.0.cmp(&b.0))
            .cloned()
            .expect("at least one candidate");
        log.removed.push(Removal {
            feature: drop.clone(),
            stage: RemovalStage::Redundancy,
            value,
            partner: None,
        });
        kept.retain(|n| *n != drop);
    }
    log.kept = kept;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(cols: Vec<(&str, Vec<f64>)>) -> FeatureMatrix {
        let n = cols[0].1.len();
        let (names, columns): (Vec<String>, Vec<Vec<f64>>) =
            cols.into_iter().map(|(n, c)| (n.to_string(), c)).unzip();
        FeatureMatrix::from_columns(names, (0..n as u64).collect(), columns).unwrap()
    }

    fn uniform(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    /// OLS R² by normal equations, independent of the correlation-inverse route.
    fn ols_r2(y: &[f64], xs: &[&[f64]]) -> f64 {
        let n = y.len();
        let p = xs.len() + 1;
        let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { xs[j - 1][i] });
        let yv = nalgebra::DVector::from_column_slice(y);
        let beta = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &yv;
        let fitted = x * beta;
        let my = y.iter().sum::<f64>() / n as f64;
        let ss_res: f64 = (0..n).map(|i| (y[i] - fitted[i]).powi(2)).sum();
        let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
        1.0 - ss_res / ss_tot
    }

    #[test]
    fn duplicated_column_removed_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = uniform(50, &mut rng);
        let m = matrix(vec![("a", a.clone()), ("b", a), ("c", uniform(50, &mut rng))]);
        let log = correlation_filter(&m, 0.7).unwrap();
        assert_eq!(log.removed_names(), vec!["b"]);
        assert_eq!(log.kept, vec!["a", "c"]);
        assert_eq!(log.removed[0].partner.as_deref(), Some("a"));
    }

    #[test]
    fn independent_columns_survive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cols: Vec<(&str, Vec<f64>)> = ["a", "b", "c", "d", "e"].into_iter().map(|n| (n, uniform(200, &mut rng))).collect();
        let m = matrix(cols);
        assert!(correlation_filter(&m, 0.7).unwrap().removed.is_empty());
        assert!(redundancy_filter(&m, 0.9).unwrap().removed.is_empty());
    }

    #[test]
    fn chain_leaves_one_survivor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = uniform(300, &mut rng);
        let noise = |rng: &mut ChaCha8Rng, s: f64| -> Vec<f64> { base.iter().map(|v| v + rng.random_range(-s..s)).collect() };
        let a = noise(&mut rng, 0.08);
        let b = noise(&mut rng, 0.08);
        let c = noise(&mut rng, 0.08);
        let m = matrix(vec![("a", a), ("b", b), ("c", c)]);
        let log = correlation_filter(&m, 0.7).unwrap();
        assert_eq!(log.kept.len(), 1);
        assert_eq!(log.removed.len(), 2);
    }

    #[test]
    fn linear_combination_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = uniform(100, &mut rng);
        let b = uniform(100, &mut rng);
        let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let m = matrix(vec![("a", a), ("b", b), ("c", c)]);
        let log = redundancy_filter(&m, 0.9).unwrap();
        assert_eq!(log.removed_names(), vec!["c"]);
        assert_eq!(log.kept, vec!["a", "b"]);
    }

    #[test]
    fn constant_columns_dropped_first() {
        let m = matrix(vec![("k", vec![1.0; 5]), ("x", vec![1.0, 2.0, 3.0, 4.0, 5.0])]);
        let log = correlation_filter(&m, 0.7).unwrap();
        assert_eq!(log.removed[0].stage, RemovalStage::Constant);
        assert_eq!(log.kept, vec!["x"]);
        let one = matrix(vec![("x", vec![1.0])]);
        assert!(correlation_filter(&one, 0.7).is_err());
    }

    #[test]
    fn r2_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = uniform(80, &mut rng);
        let b = uniform(80, &mut rng);
        let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * x - y + rng.random_range(0.0..0.3)).collect();
        let expected = ols_r2(&c, &[&a, &b]);
        let m = matrix(vec![("a", a), ("b", b), ("c", c)]);
        let names: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let got = r_squared_against_rest(&m, &names).unwrap();
        assert!((got[2].1 - expected).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn filters_leave_no_offending_pair(seed in 0u64..10_000, width in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = uniform(60, &mut rng);
            let names: Vec<String> = (0..width).map(|i| format!("f{i}")).collect();
            let cols: Vec<Vec<f64>> = (0..width)
                .map(|_| {
                    let w = rng.random_range(0.0..1.0);
                    base.iter().map(|b| w * b + rng.random_range(0.0..0.5)).collect()
                })
                .collect();
            let m = FeatureMatrix::from_columns(names, (0..60).collect(), cols).unwrap();
            let first = correlation_filter(&m, 0.7).unwrap();
            let sub = m.select_columns(&first.kept).unwrap();
            let second = redundancy_filter(&sub, 0.9).unwrap();
            for (i, a) in second.kept.iter().enumerate() {
                for b in &second.kept[i + 1..] {
                    let r = crate::stats::spearman(m.column_by_name(a).unwrap(), m.column_by_name(b).unwrap()).unwrap();
                    prop_assert!(r.abs() <= 0.7);
                }
            }
            for (_, r2) in r_squared_against_rest(&m, &second.kept).unwrap() {
                prop_assert!(r2 < 0.9);
            }
        }
    }
}
