use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rounds of the random-guessing baseline behind SA.
pub const GUESS_ROUNDS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mse: f64,
    pub mae: f64,
    /// Standardized accuracy: 1 - MAE / MAE of random guessing from the
    /// training targets. 0 when guessing itself is exact.
    pub sa: f64,
}

pub fn eval_metrics(y_true: &[f64], y_pred: &[f64], y_train_pool: &[f64], seed: u64) -> Result<EvalMetrics> {
    if y_true.is_empty() || y_train_pool.is_empty() {
        return Err(Error::domain("evaluation needs non-empty targets and training pool"));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::domain(format!(
            "{} targets but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let n = y_true.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (t, p) in y_true.iter().zip(y_pred) {
        se += (t - p) * (t - p);
        ae += (t - p).abs();
    }
    let mae = ae / n;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut guess_total = 0.0;
    for _ in 0..GUESS_ROUNDS {
        for t in y_true {
            guess_total += (t - y_train_pool[rng.random_range(0..y_train_pool.len())]).abs();
        }
    }
    let mae_guess = guess_total / (GUESS_ROUNDS as f64 * n);
    let sa = if mae_guess > 0.0 { 1.0 - mae / mae_guess } else { 0.0 };
    Ok(EvalMetrics { mse: se / n, mae, sa })
}
