use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootstrapSplit {
    /// `n` indices drawn with replacement.
    pub train: Vec<usize>,
    /// Indices never drawn, ascending.
    pub out_of_bag: Vec<usize>,
}

/// Out-of-sample bootstrap split; redraws until the out-of-bag set is non-empty.
pub fn bootstrap_split(n: usize, seed: u64) -> Result<BootstrapSplit> {
    if n < 2 {
        return Err(Error::domain(format!("bootstrap needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let train: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut drawn = vec![false; n];
        for &i in &train {
            drawn[i] = true;
        }
        let out_of_bag: Vec<usize> = (0..n).filter(|&i| !drawn[i]).collect();
        if !out_of_bag.is_empty() {
            return Ok(BootstrapSplit { train, out_of_bag });
        }
        log::debug!("bootstrap draw (n={n}, seed={seed}) left no out-of-bag rows; redrawing");
    }
}
