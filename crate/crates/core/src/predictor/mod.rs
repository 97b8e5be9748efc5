//! Next-purchase prediction: feature extraction over purchase histories, a
//! smoothed naive-Bayes classifier over discretized features, baselines,
//! evaluation metrics, and chi-squared feature ranking.

mod eval;
mod features;
mod model;

pub use eval::{
    baseline_predict, chi2_rank, chi2_statistic, evaluate, rmse, weighted_auc, BaselineKind,
    EvalReport,
};
pub use features::{
    build_instances, extract_features, feature_defs, FeatureDef, FeatureKind, FeatureValue,
    Instance, FEATURE_COUNT,
};
pub use model::{
    fit_bins, train, train_nb, Discretizer, FeatureBins, NaiveBayes, NbClassifier, DEFAULT_ALPHA,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("negative target value {0}")]
    NegativeTarget(f64),
    #[error("user {0} has no purchase before the prediction instant")]
    NoPriorPurchases(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("empty training column for feature {0}")]
    EmptyColumn(String),
    #[error("{0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub const N_CLASSES: usize = 5;

/// Which of the two classification tasks a model addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Price,
    Time,
}

impl TargetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TargetKind::Price => "price",
            TargetKind::Time => "time",
        }
    }

    pub fn class_label(&self, index: usize) -> String {
        match self {
            TargetKind::Price => format!("P{}", index + 1),
            TargetKind::Time => format!("T{}", index + 1),
        }
    }
}

/// Price classes P1..P5 over half-open intervals with thresholds at
/// 600, 1200, 2000, and 4000 cents.
pub const PRICE_THRESHOLDS_CENTS: [i64; 4] = [600, 1200, 2000, 4000];

/// Time classes T1..T5 over half-open intervals with thresholds at
/// 1, 5, 14, and 33 days.
pub const TIME_THRESHOLDS_DAYS: [f64; 4] = [1.0, 5.0, 14.0, 33.0];

/// Class index (0-based) of a price in cents: `[lo, hi)` intervals.
pub fn price_class(price_cents: i64) -> Result<usize, PredictError> {
    if price_cents < 0 {
        return Err(PredictError::NegativeTarget(price_cents as f64));
    }
    Ok(PRICE_THRESHOLDS_CENTS
        .iter()
        .position(|&t| price_cents < t)
        .unwrap_or(N_CLASSES - 1))
}

/// Class index (0-based) of an inter-purchase delay in days.
pub fn time_class(delay_days: f64) -> Result<usize, PredictError> {
    if delay_days < 0.0 || delay_days.is_nan() {
        return Err(PredictError::NegativeTarget(delay_days));
    }
    Ok(TIME_THRESHOLDS_DAYS
        .iter()
        .position(|&t| delay_days < t)
        .unwrap_or(N_CLASSES - 1))
}

/// Maps a raw target value (price in cents or delay in days) to its class.
pub fn discretize_target(value: f64, kind: TargetKind) -> Result<usize, PredictError> {
    match kind {
        TargetKind::Price => price_class(value.round() as i64),
        TargetKind::Time => time_class(value),
    }
}

/// Epoch seconds `months` calendar months after `ts`; used for the
/// train-on-first-months / test-on-last-months split.
pub fn add_months_ts(ts: i64, months: u32) -> i64 {
    let dt = chrono::DateTime::from_timestamp(ts, 0).expect("timestamp in range");
    dt.checked_add_months(chrono::Months::new(months))
        .expect("date in range")
        .timestamp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn price_class_boundaries() {
        assert_eq!(price_class(500).unwrap(), 0); // P1
        assert_eq!(price_class(599).unwrap(), 0);
        assert_eq!(price_class(600).unwrap(), 1); // left-closed
        assert_eq!(price_class(1200).unwrap(), 2);
        assert_eq!(price_class(1999).unwrap(), 2);
        assert_eq!(price_class(2000).unwrap(), 3);
        assert_eq!(price_class(4000).unwrap(), 4);
        assert_eq!(price_class(0).unwrap(), 0);
        assert!(price_class(-1).is_err());
    }

    #[test]
    fn time_class_boundaries() {
        assert_eq!(time_class(0.0).unwrap(), 0);
        assert_eq!(time_class(0.99).unwrap(), 0);
        assert_eq!(time_class(1.0).unwrap(), 1);
        assert_eq!(time_class(5.0).unwrap(), 2);
        assert_eq!(time_class(14.0).unwrap(), 3);
        assert_eq!(time_class(33.0).unwrap(), 4); // boundary goes right
        assert!(time_class(-0.5).is_err());
    }

    #[test]
    fn every_class_is_reachable_and_total() {
        for cents in [0, 599, 600, 1199, 1200, 1999, 2000, 3999, 4000, 1_000_000] {
            let c = price_class(cents).unwrap();
            assert!(c < N_CLASSES);
        }
        let mut seen = [false; N_CLASSES];
        for cents in 0..5000 {
            seen[price_class(cents).unwrap()] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
