use serde::{Deserialize, Serialize};

use super::hours_between;
use crate::error::{Error, Result};
use crate::ingest::MergeRequestRecord;

/// Creation-to-merge time in fractional hours.
pub fn completion_time(record: &MergeRequestRecord) -> Result<f64> {
    match record.merged_at {
        Some(m) if record.is_merged() => Ok(hours_between(record.created_at, m).max(0.0)),
        _ => Err(Error::NotApplicable(format!(
            "MR {} is not merged; completion time is undefined",
            record.id
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetValue {
    pub raw_hours: f64,
    pub normalized: f64,
}

/// `ln(1 + h)` followed by min-max scaling with stored bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    pub log_min: f64,
    pub log_max: f64,
}

impl TargetTransform {
    pub fn fit(hours: &[f64]) -> Result<Self> {
        if hours.is_empty() {
            return Err(Error::domain("cannot fit a target transform on no values"));
        }
        if let Some(h) = hours.iter().find(|h| !(**h >= 0.0) || !h.is_finite()) {
            return Err(Error::domain(format!("completion hours must be finite and >= 0, got {h}")));
        }
        let logs = hours.iter().map(|h| h.ln_1p());
        let (log_min, log_max) = logs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        Ok(TargetTransform { log_min, log_max })
    }

    pub fn apply(&self, hours: f64) -> f64 {
        let span = self.log_max - self.log_min;
        if span <= 0.0 {
            0.0
        } else {
            (hours.ln_1p() - self.log_min) / span
        }
    }

    pub fn invert(&self, normalized: f64) -> f64 {
        (self.log_min + normalized * (self.log_max - self.log_min)).exp_m1()
    }
}

pub fn normalize_target(hours: &[f64]) -> Result<(Vec<TargetValue>, TargetTransform)> {
    let t = TargetTransform::fit(hours)?;
    let values = hours
        .iter()
        .map(|&h| TargetValue {
            raw_hours: h,
            normalized: t.apply(h),
        })
        .collect();
    Ok((values, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::fixtures::*;
    use crate::ingest::MrState;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    #[test]
    fn completion_time_cases() {
        let mut r = record(1);
        assert_eq!(completion_time(&r).unwrap_err().class(), "not_applicable");
        r.state = MrState::Merged;
        r.merged_at = Some(r.created_at + chrono::Duration::hours(24));
        assert_eq!(completion_time(&r).unwrap(), 24.0);
        r.merged_at = Some(r.created_at);
        assert_eq!(completion_time(&r).unwrap(), 0.0);
        r.created_at = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        r.merged_at = Some(Utc.with_ymd_and_hms(2024, 1, 3, 12, 30, 0).unwrap());
        assert_eq!(completion_time(&r).unwrap(), 60.5);
    }

    #[test]
    fn closed_form_normalization() {
        let e = std::f64::consts::E;
        let (v, t) = normalize_target(&[0.0, e - 1.0, e * e - 1.0]).unwrap();
        let n: Vec<f64> = v.iter().map(|x| x.normalized).collect();
        assert!((n[0] - 0.0).abs() < 1e-12);
        assert!((n[1] - 0.5).abs() < 1e-12);
        assert!((n[2] - 1.0).abs() < 1e-12);
        assert!((t.invert(0.5) - (e - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn constant_population_is_zero() {
        let (v, _) = normalize_target(&[5.0, 5.0, 5.0]).unwrap();
        assert!(v.iter().all(|x| x.normalized == 0.0));
        assert!(normalize_target(&[]).is_err());
        assert!(normalize_target(&[-1.0]).is_err());
    }

    proptest! {
        #[test]
        fn normalization_is_monotone_and_invertible(hours in proptest::collection::vec(0.0f64..1e5, 2..40)) {
            let (v, t) = normalize_target(&hours).unwrap();
            for a in &v {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&a.normalized));
                if t.log_max > t.log_min {
                    prop_assert!((t.invert(a.normalized) - a.raw_hours).abs() <= 1e-6 * (1.0 + a.raw_hours));
                }
                for b in &v {
                    if a.raw_hours <= b.raw_hours {
                        prop_assert!(a.normalized <= b.normalized);
                    }
                }
            }
        }
    }
}
