use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerBetter,
    HigherBetter,
}

/// Ratio of the without-deviation metric to the with-deviation metric,
/// oriented so that values above 1 mean the removal helped. Error metrics
/// on a [0,1] scale are compared through `1 - m`.
pub fn improvement_factor(without: f64, with: f64, direction: Direction) -> Result<f64> {
    match direction {
        Direction::LowerBetter => {
            if !(0.0..=1.0).contains(&without) || !(0.0..=1.0).contains(&with) {
                return Err(Error::domain(format!(
                    "lower-is-better metrics must lie in [0,1], got {without} and {with}"
                )));
            }
            if with == 1.0 {
                return Err(Error::undefined("improvement factor with 1 - m_with = 0"));
            }
            Ok((1.0 - without) / (1.0 - with))
        }
        Direction::HigherBetter => {
            if !(with > 0.0) {
                return Err(Error::undefined(format!(
                    "higher-is-better improvement needs m_with > 0, got {with}"
                )));
            }
            Ok(without / with)
        }
    }
}
