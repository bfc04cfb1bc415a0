use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    #[default]
    Permutation,
    Impurity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub features: Vec<String>,
    /// Non-negative; sums to 1 unless every entry is 0.
    pub values: Vec<f64>,
}

impl ImportanceVector {
    fn normalized(features: Vec<String>, raw: Vec<f64>) -> Self {
        let clipped: Vec<f64> = raw.into_iter().map(|v| if v > 0.0 { v } else { 0.0 }).collect();
        let total: f64 = clipped.iter().sum();
        let values = if total > 0.0 { clipped.iter().map(|v| v / total).collect() } else { clipped };
        ImportanceVector { features, values }
    }

    pub fn get(&self, feature: &str) -> Option<f64> {
        self.features.iter().position(|f| f == feature).map(|j| self.values[j])
    }
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

/// Mean increase in validation MSE when one column is shuffled, floored at
/// zero and normalized.
pub fn permutation_importance(
    model: &Model,
    x_val: &FeatureMatrix,
    y_val: &[f64],
    seed: u64,
    n_repeats: usize,
) -> Result<ImportanceVector> {
    if x_val.n_rows() != y_val.len() {
        return Err(Error::domain("validation rows and targets differ in length"));
    }
    if y_val.is_empty() || n_repeats == 0 {
        return Err(Error::domain("permutation importance needs rows and at least one repeat"));
    }
    let baseline = mse(&model.predict(x_val)?, y_val);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Vec::with_capacity(x_val.n_cols());
    for j in 0..x_val.n_cols() {
        let mut total = 0.0;
        for _ in 0..n_repeats {
            let mut col = x_val.column(j).to_vec();
            col.shuffle(&mut rng);
            total += mse(&model.predict(&x_val.with_column(j, col))?, y_val) - baseline;
        }
        raw.push(total / n_repeats as f64);
    }
    Ok(ImportanceVector::normalized(x_val.names.clone(), raw))
}

/// Squared-error reduction credited to each feature during training.
pub fn impurity_importance(model: &Model) -> ImportanceVector {
    ImportanceVector::normalized(model.features.clone(), model.impurity.clone())
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::linear;
    use super::super::{train, EnsembleKind, EnsembleSpec};
    use super::*;

    fn spec() -> EnsembleSpec {
        EnsembleSpec { n_trees: 30, ..EnsembleSpec::new(EnsembleKind::BaggedRandomTrees, 9) }
    }

    #[test]
    fn driver_dominates_and_noise_vanishes() {
        let (x, y) = linear(400, 3, 11);
        let train_rows: Vec<usize> = (0..300).collect();
        let val_rows: Vec<usize> = (300..400).collect();
        let m = train(&spec(), &x.select_rows(&train_rows), &y[..300]).unwrap();
        let imp = permutation_importance(&m, &x.select_rows(&val_rows), &y[300..], 1, 5).unwrap();
        assert!((imp.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let top = imp.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(imp.get("x0"), Some(top));
        for noise in ["x1", "x2", "x3"] {
            assert!(imp.get(noise).unwrap() < 0.02, "{noise}: {:?}", imp.get(noise));
        }
        let imp = impurity_importance(&m);
        assert!(imp.get("x0").unwrap() > 0.5);
    }

    #[test]
    fn duplicated_driver_shares_credit() {
        let (x, y) = linear(400, 2, 12);
        let dup = FeatureMatrix::from_columns(
            vec!["x0".into(), "copy".into(), "x1".into(), "x2".into()],
            x.row_ids.clone(),
            vec![x.column(0).to_vec(), x.column(0).to_vec(), x.column(1).to_vec(), x.column(2).to_vec()],
        )
        .unwrap();
        let train_rows: Vec<usize> = (0..300).collect();
        let val_rows: Vec<usize> = (300..400).collect();
        let raw = |m: &FeatureMatrix| {
            let model = train(&spec(), &m.select_rows(&train_rows), &y[..300]).unwrap();
            permutation_importance(&model, &m.select_rows(&val_rows), &y[300..], 2, 5).unwrap()
        };
        let single = raw(&x).get("x0").unwrap();
        let shared = raw(&dup);
        assert!(shared.get("x0").unwrap() < single);
        assert!(shared.get("copy").unwrap() < single);
    }

    #[test]
    fn constant_model_has_zero_importance() {
        let (x, _) = linear(40, 1, 13);
        let y = vec![1.0; 40];
        let m = train(&spec(), &x, &y).unwrap();
        let imp = permutation_importance(&m, &x, &y, 0, 3).unwrap();
        assert!(imp.values.iter().all(|v| *v == 0.0));
    }
}
