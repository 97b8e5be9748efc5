//! Discretization and the additively smoothed naive-Bayes model.

use super::features::{FeatureDef, FeatureKind, FeatureValue, Instance};
use super::{PredictError, TargetKind};
use crate::stats;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

pub const DEFAULT_ALPHA: f64 = 0.5;

/// Quantile bin edges for one continuous feature: the i/k quantiles of the
/// training values, deduplicated. A constant column collapses to no edges.
pub fn fit_bins(values: &[f64], k: usize) -> Result<Vec<f64>, PredictError> {
    if values.is_empty() {
        return Err(PredictError::EmptyColumn("<unnamed>".to_string()));
    }
    if k < 2 {
        return Ok(Vec::new());
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN"));
    if sorted[0] == *sorted.last().unwrap() {
        return Ok(Vec::new()); // constant column: single bin
    }
    let mut edges = Vec::with_capacity(k - 1);
    for i in 1..k {
        let edge = stats::quantile_sorted(&sorted, i as f64 / k as f64);
        if edges.last() != Some(&edge) {
            edges.push(edge);
        }
    }
    Ok(edges)
}

/// Bin layout of one feature. The missing bin is always the last index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureBins {
    Numeric { edges: Vec<f64> },
    Categorical { values: Vec<String> },
}

impl FeatureBins {
    /// Number of bins including the missing bin.
    pub fn n_bins(&self) -> usize {
        match self {
            FeatureBins::Numeric { edges } => edges.len() + 2,
            FeatureBins::Categorical { values } => values.len() + 1,
        }
    }

    /// Bin index of a value. Missing values use the missing bin; categorical
    /// values unseen in training fall back to the missing bin, and numeric
    /// values outside the training range land in the nearest edge bin.
    pub fn index_of(&self, value: &FeatureValue) -> usize {
        match (self, value) {
            (_, FeatureValue::Missing) => self.n_bins() - 1,
            (FeatureBins::Numeric { edges }, FeatureValue::Num(v)) => {
                edges.partition_point(|e| e < v)
            }
            (FeatureBins::Categorical { values }, FeatureValue::Cat(v)) => values
                .binary_search(v)
                .unwrap_or_else(|_| values.len()),
            // kind mismatch: treat as missing
            _ => self.n_bins() - 1,
        }
    }
}

/// Fitted per-feature bin tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discretizer {
    pub features: Vec<FeatureDef>,
    pub bins: Vec<FeatureBins>,
}

impl Discretizer {
    /// Fits quantile bins (k per continuous feature) and categorical value
    /// tables on training rows.
    pub fn fit(
        features: Vec<FeatureDef>,
        rows: &[Vec<FeatureValue>],
        k: usize,
    ) -> Result<Discretizer, PredictError> {
        let mut bins = Vec::with_capacity(features.len());
        for (idx, feature) in features.iter().enumerate() {
            let bin = match feature.kind {
                FeatureKind::Numeric => {
                    let values: Vec<f64> = rows
                        .iter()
                        .filter_map(|row| match &row[idx] {
                            FeatureValue::Num(v) => Some(*v),
                            _ => None,
                        })
                        .collect();
                    let edges = if values.is_empty() {
                        Vec::new()
                    } else {
                        fit_bins(&values, k)
                            .map_err(|_| PredictError::EmptyColumn(feature.name.clone()))?
                    };
                    FeatureBins::Numeric { edges }
                }
                FeatureKind::Categorical => {
                    let values: BTreeSet<String> = rows
                        .iter()
                        .filter_map(|row| match &row[idx] {
                            FeatureValue::Cat(v) => Some(v.clone()),
                            _ => None,
                        })
                        .collect();
                    FeatureBins::Categorical { values: values.into_iter().collect() }
                }
            };
            bins.push(bin);
        }
        Ok(Discretizer { features, bins })
    }

    pub fn n_bins(&self) -> Vec<usize> {
        self.bins.iter().map(FeatureBins::n_bins).collect()
    }

    pub fn discretize_row(&self, row: &[FeatureValue]) -> Vec<usize> {
        self.bins
            .iter()
            .zip(row)
            .map(|(bins, value)| bins.index_of(value))
            .collect()
    }
}

/// Class priors and per-feature conditional tables with additive smoothing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NaiveBayes {
    pub alpha: f64,
    pub n_classes: usize,
    /// Smoothed class priors: (N_c + alpha) / (N + alpha * K).
    pub priors: Vec<f64>,
    /// Bins per feature, including the missing bin when the caller models one.
    pub n_bins: Vec<usize>,
    /// cpt[feature][class][bin] = (count + alpha) / (N_c + alpha * V_f).
    pub cpt: Vec<Vec<Vec<f64>>>,
}

/// Trains the smoothed model on discretized rows. `n_bins[f]` is the bin
/// vocabulary size V_f of feature f; every row value must be below it.
pub fn train_nb(
    rows: &[Vec<usize>],
    labels: &[usize],
    n_classes: usize,
    n_bins: &[usize],
    alpha: f64,
) -> Result<NaiveBayes, PredictError> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(PredictError::EmptyTrainingSet);
    }
    if alpha <= 0.0 {
        return Err(PredictError::Invalid("alpha must be positive".to_string()));
    }
    let n_features = n_bins.len();
    let n = rows.len() as f64;

    let mut class_counts = vec![0usize; n_classes];
    for &label in labels {
        if label >= n_classes {
            return Err(PredictError::Invalid(format!("label {label} out of range")));
        }
        class_counts[label] += 1;
    }
    let priors: Vec<f64> = class_counts
        .iter()
        .map(|&c| (c as f64 + alpha) / (n + alpha * n_classes as f64))
        .collect();

    let mut counts: Vec<Vec<Vec<u64>>> = n_bins
        .iter()
        .map(|&v| vec![vec![0u64; v]; n_classes])
        .collect();
    for (row, &label) in rows.iter().zip(labels) {
        if row.len() != n_features {
            return Err(PredictError::Invalid("row width mismatch".to_string()));
        }
        for (f, &bin) in row.iter().enumerate() {
            if bin >= n_bins[f] {
                return Err(PredictError::Invalid(format!(
                    "bin {bin} out of range for feature {f}"
                )));
            }
            counts[f][label][bin] += 1;
        }
    }

    let cpt = counts
        .iter()
        .enumerate()
        .map(|(f, per_class)| {
            per_class
                .iter()
                .enumerate()
                .map(|(c, bins)| {
                    let denom = class_counts[c] as f64 + alpha * n_bins[f] as f64;
                    bins.iter().map(|&count| (count as f64 + alpha) / denom).collect()
                })
                .collect()
        })
        .collect();

    Ok(NaiveBayes { alpha, n_classes, priors, n_bins: n_bins.to_vec(), cpt })
}

impl NaiveBayes {
    /// Normalized posterior over classes, computed in log space.
    pub fn posterior(&self, row: &[usize]) -> Vec<f64> {
        let mut log_scores: Vec<f64> = self.priors.iter().map(|p| p.ln()).collect();
        for (f, &bin) in row.iter().enumerate() {
            let bin = bin.min(self.n_bins[f] - 1);
            for (c, score) in log_scores.iter_mut().enumerate() {
                *score += self.cpt[f][c][bin].ln();
            }
        }
        let max = log_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut posterior: Vec<f64> = log_scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = posterior.iter().sum();
        for p in &mut posterior {
            *p /= total;
        }
        posterior
    }

    /// Argmax class (ties toward the lower index) and the posterior vector.
    pub fn predict(&self, row: &[usize]) -> (usize, Vec<f64>) {
        let posterior = self.posterior(row);
        let mut best = 0;
        for (c, &p) in posterior.iter().enumerate() {
            if p > posterior[best] {
                best = c;
            }
        }
        (best, posterior)
    }
}

/// Task-level classifier: feature table, fitted bins, smoothed model, and the
/// training majority class used by baseline fallbacks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NbClassifier {
    pub target: TargetKind,
    pub include_cross_target: bool,
    pub training_majority: usize,
    pub discretizer: Discretizer,
    pub nb: NaiveBayes,
}

/// Fits bins on the training instances and trains the smoothed model.
pub fn train(
    instances: &[Instance],
    target: TargetKind,
    include_cross_target: bool,
    alpha: f64,
    quantile_bins: usize,
) -> Result<NbClassifier, PredictError> {
    if instances.is_empty() {
        return Err(PredictError::EmptyTrainingSet);
    }
    let defs = super::feature_defs(target);
    let rows: Vec<&Vec<FeatureValue>> = instances.iter().map(|i| &i.features).collect();
    let rows_owned: Vec<Vec<FeatureValue>> = rows.iter().map(|r| (*r).clone()).collect();
    let discretizer = Discretizer::fit(defs, &rows_owned, quantile_bins)?;
    let discretized: Vec<Vec<usize>> = instances
        .iter()
        .map(|i| discretizer.discretize_row(&i.features))
        .collect();
    let labels: Vec<usize> = instances.iter().map(|i| i.label).collect();
    let nb = train_nb(
        &discretized,
        &labels,
        super::N_CLASSES,
        &discretizer.n_bins(),
        alpha,
    )?;

    let mut class_counts = vec![0usize; super::N_CLASSES];
    for &label in &labels {
        class_counts[label] += 1;
    }
    let training_majority = class_counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|(c, _)| c)
        .unwrap_or(0);

    Ok(NbClassifier {
        target,
        include_cross_target,
        training_majority,
        discretizer,
        nb,
    })
}

impl NbClassifier {
    pub fn predict(&self, features: &[FeatureValue]) -> (usize, Vec<f64>) {
        self.nb.predict(&self.discretizer.discretize_row(features))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), PredictError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<NbClassifier, PredictError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
