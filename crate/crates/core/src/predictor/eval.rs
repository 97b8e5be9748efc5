//! Baselines, evaluation metrics, and chi-squared feature ranking.

use super::features::Instance;
use super::model::NbClassifier;
use super::{PredictError, TargetKind, N_CLASSES};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Majority,
    LastClass,
    MostUsedClass,
}

/// Deterministic baseline prediction. Missing history falls back to the
/// training majority class; most-used ties break toward the lower class.
pub fn baseline_predict(kind: BaselineKind, history: &[usize], training_majority: usize) -> usize {
    match kind {
        BaselineKind::Majority => training_majority,
        BaselineKind::LastClass => history.last().copied().unwrap_or(training_majority),
        BaselineKind::MostUsedClass => {
            if history.is_empty() {
                return training_majority;
            }
            let mut counts = [0usize; N_CLASSES];
            for &class in history {
                counts[class] += 1;
            }
            let max = counts.iter().max().copied().unwrap_or(0);
            counts.iter().position(|&c| c == max).unwrap_or(training_majority)
        }
    }
}

/// Root mean square error of posterior vectors against one-hot labels,
/// averaged over instances and classes.
pub fn rmse(labels: &[usize], posteriors: &[Vec<f64>], n_classes: usize) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (&label, posterior) in labels.iter().zip(posteriors) {
        for c in 0..n_classes {
            let target = if c == label { 1.0 } else { 0.0 };
            let diff = posterior[c] - target;
            total += diff * diff;
        }
    }
    (total / (labels.len() * n_classes) as f64).sqrt()
}

/// One-vs-rest AUC for one class from (score, is_positive) pairs, using the
/// rank statistic with average ranks for ties.
fn auc_one_vs_rest(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = stats::ranks(scores);
    let pos_rank_sum: f64 = ranks
        .iter()
        .zip(positives)
        .filter(|(_, &p)| p)
        .map(|(&r, _)| r)
        .sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Prevalence-weighted one-vs-rest AUC over all classes present in `labels`.
pub fn weighted_auc(labels: &[usize], posteriors: &[Vec<f64>], n_classes: usize) -> f64 {
    let n = labels.len();
    if n == 0 {
        return 0.5;
    }
    let mut total = 0.0;
    for c in 0..n_classes {
        let positives: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let prevalence = positives.iter().filter(|&&p| p).count() as f64 / n as f64;
        if prevalence == 0.0 {
            continue;
        }
        let scores: Vec<f64> = posteriors.iter().map(|p| p[c]).collect();
        let auc = auc_one_vs_rest(&scores, &positives).unwrap_or(0.5);
        total += prevalence * auc;
    }
    total
}

/// Table-shaped evaluation summary for one task.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub target: TargetKind,
    pub n_test: usize,
    /// Accuracy of always predicting the largest test class: exactly that
    /// class's share of the test set.
    pub majority_accuracy: f64,
    pub last_class_accuracy: f64,
    pub most_used_accuracy: f64,
    pub classifier_accuracy: f64,
    pub absolute_improvement: f64,
    pub relative_improvement: f64,
    pub weighted_auc: f64,
    pub rmse: f64,
}

/// Scores the classifier and the three baselines on test instances.
pub fn evaluate(model: &NbClassifier, test: &[Instance]) -> Result<EvalReport, PredictError> {
    if test.is_empty() {
        return Err(PredictError::Invalid("empty test set".to_string()));
    }
    let n = test.len();
    let mut class_counts = vec![0usize; N_CLASSES];
    for instance in test {
        class_counts[instance.label] += 1;
    }
    let majority_accuracy = class_counts.iter().max().copied().unwrap_or(0) as f64 / n as f64;

    let mut last_hits = 0usize;
    let mut most_used_hits = 0usize;
    let mut classifier_hits = 0usize;
    let mut labels = Vec::with_capacity(n);
    let mut posteriors = Vec::with_capacity(n);
    for instance in test {
        let last = baseline_predict(
            BaselineKind::LastClass,
            &instance.prior_class_history,
            model.training_majority,
        );
        let most_used = baseline_predict(
            BaselineKind::MostUsedClass,
            &instance.prior_class_history,
            model.training_majority,
        );
        let (predicted, posterior) = model.predict(&instance.features);
        last_hits += usize::from(last == instance.label);
        most_used_hits += usize::from(most_used == instance.label);
        classifier_hits += usize::from(predicted == instance.label);
        labels.push(instance.label);
        posteriors.push(posterior);
    }

    let classifier_accuracy = classifier_hits as f64 / n as f64;
    Ok(EvalReport {
        target: model.target,
        n_test: n,
        majority_accuracy,
        last_class_accuracy: last_hits as f64 / n as f64,
        most_used_accuracy: most_used_hits as f64 / n as f64,
        classifier_accuracy,
        absolute_improvement: classifier_accuracy - majority_accuracy,
        relative_improvement: if majority_accuracy > 0.0 {
            (classifier_accuracy - majority_accuracy) / majority_accuracy
        } else {
            0.0
        },
        weighted_auc: weighted_auc(&labels, &posteriors, N_CLASSES),
        rmse: rmse(&labels, &posteriors, N_CLASSES),
    })
}

/// Pearson chi-squared statistic of an observed contingency table
/// (rows x columns). Cells whose expected count is zero are skipped; a table
/// with fewer than two non-empty rows or columns scores zero.
pub fn chi2_statistic(table: &[Vec<u64>]) -> f64 {
    let n_rows = table.len();
    let n_cols = table.first().map(Vec::len).unwrap_or(0);
    let row_totals: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_totals: Vec<u64> = (0..n_cols)
        .map(|c| table.iter().map(|r| r[c]).sum())
        .collect();
    let grand: u64 = row_totals.iter().sum();
    if grand == 0
        || row_totals.iter().filter(|&&t| t > 0).count() < 2
        || col_totals.iter().filter(|&&t| t > 0).count() < 2
    {
        return 0.0;
    }
    let mut chi2 = 0.0;
    for r in 0..n_rows {
        for c in 0..n_cols {
            let expected = row_totals[r] as f64 * col_totals[c] as f64 / grand as f64;
            if expected > 0.0 {
                let diff = table[r][c] as f64 - expected;
                chi2 += diff * diff / expected;
            }
        }
    }
    chi2
}

/// Ranks features by the chi-squared statistic of their bin-versus-class
/// contingency tables, using the model's own discretization. Descending by
/// statistic, ties broken by feature name.
pub fn chi2_rank(model: &NbClassifier, instances: &[Instance]) -> Vec<(String, f64)> {
    let n_bins = model.discretizer.n_bins();
    let n_features = n_bins.len();
    let mut tables: Vec<Vec<Vec<u64>>> = n_bins
        .iter()
        .map(|&v| vec![vec![0u64; N_CLASSES]; v])
        .collect();
    for instance in instances {
        let row = model.discretizer.discretize_row(&instance.features);
        for (f, &bin) in row.iter().enumerate() {
            tables[f][bin][instance.label] += 1;
        }
    }
    let mut ranked: Vec<(String, f64)> = (0..n_features)
        .map(|f| {
            (
                model.discretizer.features[f].name.clone(),
                chi2_statistic(&tables[f]),
            )
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baselines_follow_history_rules() {
        // history classes [P2, P5, P5]
        let history = vec![1, 4, 4];
        assert_eq!(baseline_predict(BaselineKind::LastClass, &history, 0), 4);
        assert_eq!(baseline_predict(BaselineKind::MostUsedClass, &history, 0), 4);
        // tie toward the lower class
        assert_eq!(baseline_predict(BaselineKind::MostUsedClass, &[0, 1], 3), 0);
        // empty history falls back to the training majority
        assert_eq!(baseline_predict(BaselineKind::LastClass, &[], 2), 2);
        assert_eq!(baseline_predict(BaselineKind::MostUsedClass, &[], 2), 2);
        assert_eq!(baseline_predict(BaselineKind::Majority, &[4, 4], 2), 2);
    }

    #[test]
    fn uniform_predictor_rmse_closed_form() {
        let labels = vec![0, 1, 2, 3, 4];
        let posteriors = vec![vec![0.2; 5]; 5];
        assert!((rmse(&labels, &posteriors, 5) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictor_has_zero_rmse() {
        let labels = vec![0, 3];
        let posteriors = vec![
            vec![1.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0, 0.0],
        ];
        assert_eq!(rmse(&labels, &posteriors, 5), 0.0);
    }

    #[test]
    fn chi2_hand_table() {
        let table = vec![vec![10, 20], vec![20, 10]];
        assert!((chi2_statistic(&table) - 20.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn chi2_degenerate_single_bin_is_zero() {
        assert_eq!(chi2_statistic(&[vec![10, 20]]), 0.0);
        assert_eq!(chi2_statistic(&[vec![10, 20], vec![0, 0]]), 0.0);
        assert_eq!(chi2_statistic(&[]), 0.0);
    }

    #[test]
    fn chi2_of_an_independent_feature_stays_near_the_dof() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(5);
        let mut table = vec![vec![0u64; 5]; 4];
        for _ in 0..100_000 {
            let bin = rng.random_range(0..4usize);
            let class = rng.random_range(0..5usize);
            table[bin][class] += 1;
        }
        let chi2 = chi2_statistic(&table);
        // degrees of freedom (4-1)(5-1) = 12; independence keeps the
        // statistic on that order
        assert!(chi2 < 36.0, "independent feature scored chi2 {chi2}");
    }

    #[test]
    fn chi2_is_invariant_under_row_and_column_permutation() {
        let base = vec![vec![3, 9, 1], vec![7, 2, 5], vec![4, 4, 8]];
        let rows_swapped = vec![base[2].clone(), base[0].clone(), base[1].clone()];
        let cols_swapped: Vec<Vec<u64>> = base
            .iter()
            .map(|r| vec![r[1], r[2], r[0]])
            .collect();
        let x = chi2_statistic(&base);
        assert!((chi2_statistic(&rows_swapped) - x).abs() < 1e-9);
        assert!((chi2_statistic(&cols_swapped) - x).abs() < 1e-9);
    }

    #[test]
    fn perfect_auc_and_random_auc() {
        let labels = vec![0, 0, 1, 1];
        let perfect = vec![
            vec![0.9, 0.1],
            vec![0.8, 0.2],
            vec![0.1, 0.9],
            vec![0.2, 0.8],
        ];
        assert!((weighted_auc(&labels, &perfect, 2) - 1.0).abs() < 1e-12);
        let constant = vec![vec![0.5, 0.5]; 4];
        assert!((weighted_auc(&labels, &constant, 2) - 0.5).abs() < 1e-12);
    }
}
