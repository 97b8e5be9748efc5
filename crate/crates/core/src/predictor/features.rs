//! The 55 predictor features and prediction-instance construction.
//!
//! Every history feature reads only events strictly before the prediction
//! instant. The single cross-target slot is the declared exception: it
//! carries the time of the next purchase when predicting price, and the
//! price of the next purchase when predicting time.

use super::{price_class, time_class, PredictError, TargetKind, N_CLASSES};
use crate::datastore::{Dataset, EmailGraph, Gender, PurchaseEvent};
use crate::stats;
use serde::{Deserialize, Serialize};

const SECONDS_PER_DAY: f64 = 86_400.0;

pub const FEATURE_COUNT: usize = 55;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
}

fn def(name: &str, kind: FeatureKind) -> FeatureDef {
    FeatureDef { name: name.to_string(), kind }
}

/// The fixed 55-slot feature table. Slot 40 is the cross-target feature and
/// depends on the task.
pub fn feature_defs(target: TargetKind) -> Vec<FeatureDef> {
    use FeatureKind::{Categorical as C, Numeric as N};
    let mut defs = vec![
        def("gender", C),
        def("age", N),
        def("zip", C),
        def("income_cents", N),
        def("price_last_1", N),
        def("price_last_2", N),
        def("price_last_3", N),
        def("price_class_last_1", C),
        def("price_class_last_2", C),
        def("price_class_last_3", C),
        def("purchase_count", N),
        def("price_mean", N),
        def("price_median", N),
        def("price_total", N),
        def("price_std", N),
    ];
    for i in 1..=N_CLASSES {
        defs.push(def(&format!("price_class_count_p{i}"), N));
    }
    defs.push(def("price_class_modal", C));
    defs.push(def("price_class_modal_count", N));
    defs.push(def("purchases_so_far", N));
    defs.push(def("days_since_last_1", N));
    defs.push(def("days_since_last_2", N));
    defs.push(def("days_since_last_3", N));
    defs.push(def("gap_mean_days", N));
    defs.push(def("gap_median_days", N));
    defs.push(def("gap_std_days", N));
    for i in 1..=N_CLASSES {
        defs.push(def(&format!("time_class_count_t{i}"), N));
    }
    defs.push(def("time_class_modal", C));
    defs.push(def("time_class_modal_count", N));
    defs.push(def("category_last_1", C));
    defs.push(def("category_last_2", C));
    defs.push(def("category_last_3", C));
    defs.push(def("category_modal", C));
    defs.push(match target {
        TargetKind::Price => def("next_delay_days", N),
        TargetKind::Time => def("next_price_cents", N),
    });
    for stat in ["mean", "median", "std", "min", "max", "p10", "p90"] {
        defs.push(def(&format!("contact_price_{stat}"), N));
    }
    for stat in ["mean", "median", "std", "min", "max", "p10", "p90"] {
        defs.push(def(&format!("contact_gap_{stat}"), N));
    }
    debug_assert_eq!(defs.len(), FEATURE_COUNT);
    defs
}

/// A feature slot value; absence is explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Missing,
    Num(f64),
    Cat(String),
}

impl FeatureValue {
    fn num(value: f64) -> FeatureValue {
        FeatureValue::Num(value)
    }

    fn opt_num(value: Option<f64>) -> FeatureValue {
        value.map(FeatureValue::Num).unwrap_or(FeatureValue::Missing)
    }
}

/// One training or test row: the labeled purchase plus everything known
/// strictly before it.
#[derive(Debug, Clone)]
pub struct Instance {
    pub user_id: String,
    pub instant: i64,
    pub label: usize,
    /// Classes of the user's earlier purchases (prices or gaps, per task),
    /// oldest first; feeds the last-class and most-used-class baselines.
    pub prior_class_history: Vec<usize>,
    pub features: Vec<FeatureValue>,
}

fn modal_class(counts: &[u64]) -> Option<(usize, u64)> {
    let max = *counts.iter().max()?;
    if max == 0 {
        return None;
    }
    counts.iter().position(|&c| c == max).map(|i| (i, max))
}

fn seven_stats(values: &[f64]) -> [FeatureValue; 7] {
    if values.is_empty() {
        return std::array::from_fn(|_| FeatureValue::Missing);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN"));
    [
        FeatureValue::opt_num(stats::mean(values)),
        FeatureValue::num(stats::quantile_sorted(&sorted, 0.5)),
        FeatureValue::opt_num(stats::std_pop(values)),
        FeatureValue::num(sorted[0]),
        FeatureValue::num(*sorted.last().unwrap()),
        FeatureValue::num(stats::quantile_sorted(&sorted, 0.1)),
        FeatureValue::num(stats::quantile_sorted(&sorted, 0.9)),
    ]
}

fn events_before(events: &[PurchaseEvent], instant: i64) -> &[PurchaseEvent] {
    let end = events.partition_point(|e| e.timestamp < instant);
    &events[..end]
}

/// Extracts the 55-slot feature vector for one user at one instant.
///
/// The user must have at least one purchase strictly before the instant.
/// Contact features aggregate over the pre-instant purchases of 1st-level
/// contacts; with no graph or no contacts they are missing.
pub fn extract_features(
    dataset: &Dataset,
    graph: Option<&EmailGraph>,
    user_id: &str,
    prediction_instant: i64,
    target: TargetKind,
    include_cross_target: bool,
) -> Result<Vec<FeatureValue>, PredictError> {
    let events = dataset.events_of(user_id);
    let history = events_before(events, prediction_instant);
    if history.is_empty() {
        return Err(PredictError::NoPriorPurchases(user_id.to_string()));
    }

    let mut features = Vec::with_capacity(FEATURE_COUNT);

    // demographics
    let profile = dataset.profile(user_id);
    features.push(match profile.map(|p| p.gender) {
        Some(Gender::Female) => FeatureValue::Cat("female".to_string()),
        Some(Gender::Male) => FeatureValue::Cat("male".to_string()),
        _ => FeatureValue::Missing,
    });
    features.push(FeatureValue::opt_num(
        profile.and_then(|p| p.age).map(f64::from),
    ));
    features.push(
        profile
            .and_then(|p| p.zip.clone())
            .map(FeatureValue::Cat)
            .unwrap_or(FeatureValue::Missing),
    );
    features.push(FeatureValue::opt_num(
        profile.and_then(|p| p.income_cents).map(|v| v as f64),
    ));

    // price history
    let prices: Vec<f64> = history.iter().map(|e| e.price_cents as f64).collect();
    for k in 1..=3 {
        features.push(FeatureValue::opt_num(
            (history.len() >= k).then(|| prices[history.len() - k]),
        ));
    }
    for k in 1..=3 {
        features.push(if history.len() >= k {
            let class = price_class(history[history.len() - k].price_cents)?;
            FeatureValue::Cat(TargetKind::Price.class_label(class))
        } else {
            FeatureValue::Missing
        });
    }
    features.push(FeatureValue::num(history.len() as f64));
    features.push(FeatureValue::opt_num(stats::mean(&prices)));
    features.push(FeatureValue::opt_num(stats::median(&prices)));
    features.push(FeatureValue::num(prices.iter().sum()));
    features.push(FeatureValue::opt_num(stats::std_pop(&prices)));
    let mut price_class_counts = [0u64; N_CLASSES];
    for event in history {
        price_class_counts[price_class(event.price_cents)?] += 1;
    }
    for &count in &price_class_counts {
        features.push(FeatureValue::num(count as f64));
    }
    match modal_class(&price_class_counts) {
        Some((class, count)) => {
            features.push(FeatureValue::Cat(TargetKind::Price.class_label(class)));
            features.push(FeatureValue::num(count as f64));
        }
        None => {
            features.push(FeatureValue::Missing);
            features.push(FeatureValue::Missing);
        }
    }
    features.push(FeatureValue::num(history.len() as f64));

    // time history
    let last_ts = history.last().unwrap().timestamp;
    for k in 1..=3 {
        features.push(FeatureValue::opt_num((history.len() >= k).then(|| {
            (prediction_instant - history[history.len() - k].timestamp) as f64 / SECONDS_PER_DAY
        })));
    }
    let gaps: Vec<f64> = history
        .windows(2)
        .map(|w| (w[1].timestamp - w[0].timestamp) as f64 / SECONDS_PER_DAY)
        .collect();
    features.push(FeatureValue::opt_num(stats::mean(&gaps)));
    features.push(FeatureValue::opt_num(stats::median(&gaps)));
    features.push(FeatureValue::opt_num(stats::std_pop(&gaps)));
    let mut time_class_counts = [0u64; N_CLASSES];
    for &gap in &gaps {
        time_class_counts[time_class(gap)?] += 1;
    }
    for &count in &time_class_counts {
        features.push(FeatureValue::num(count as f64));
    }
    match modal_class(&time_class_counts) {
        Some((class, count)) => {
            features.push(FeatureValue::Cat(TargetKind::Time.class_label(class)));
            features.push(FeatureValue::num(count as f64));
        }
        None => {
            features.push(FeatureValue::Missing);
            features.push(FeatureValue::Missing);
        }
    }

    // product history (level-1 category labels)
    let category_of = |event: &PurchaseEvent| -> Option<String> {
        event.category.as_ref().map(|c| c.l1.clone())
    };
    for k in 1..=3 {
        features.push(if history.len() >= k {
            category_of(&history[history.len() - k])
                .map(FeatureValue::Cat)
                .unwrap_or(FeatureValue::Missing)
        } else {
            FeatureValue::Missing
        });
    }
    {
        let mut counts: std::collections::BTreeMap<String, u64> = std::collections::BTreeMap::new();
        for event in history {
            if let Some(cat) = category_of(event) {
                *counts.entry(cat).or_insert(0) += 1;
            }
        }
        // ties break toward the lexicographically smallest label
        let modal = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(k, _)| k.clone());
        features.push(modal.map(FeatureValue::Cat).unwrap_or(FeatureValue::Missing));
    }

    // cross-target slot: the one declared look-ahead
    features.push(if !include_cross_target {
        FeatureValue::Missing
    } else {
        match target {
            TargetKind::Price => {
                FeatureValue::num((prediction_instant - last_ts) as f64 / SECONDS_PER_DAY)
            }
            TargetKind::Time => {
                let at_instant = events
                    .iter()
                    .find(|e| e.timestamp == prediction_instant)
                    .map(|e| e.price_cents as f64);
                FeatureValue::opt_num(at_instant)
            }
        }
    });

    // contacts: pooled pre-instant purchases of 1st-level contacts
    let mut contact_prices: Vec<f64> = Vec::new();
    let mut contact_gaps: Vec<f64> = Vec::new();
    if let Some(graph) = graph {
        for contact in graph.first_level(user_id) {
            let contact_history = events_before(dataset.events_of(contact), prediction_instant);
            contact_prices.extend(contact_history.iter().map(|e| e.price_cents as f64));
            contact_gaps.extend(
                contact_history
                    .windows(2)
                    .map(|w| (w[1].timestamp - w[0].timestamp) as f64 / SECONDS_PER_DAY),
            );
        }
    }
    features.extend(seven_stats(&contact_prices));
    features.extend(seven_stats(&contact_gaps));

    debug_assert_eq!(features.len(), FEATURE_COUNT);
    Ok(features)
}

/// Builds one instance per purchase that has at least one strictly-earlier
/// purchase by the same user. For the time task the label is the class of
/// the delay since the previous distinct purchase instant.
pub fn build_instances(
    dataset: &Dataset,
    graph: Option<&EmailGraph>,
    target: TargetKind,
    include_cross_target: bool,
) -> Result<Vec<Instance>, PredictError> {
    let mut instances = Vec::new();
    for (user_id, events) in dataset.iter_user_events() {
        let mut cached: Option<(i64, Vec<FeatureValue>)> = None;
        for (i, event) in events.iter().enumerate() {
            // events are time sorted: anything at the first instant has no
            // strictly-earlier purchase
            if event.timestamp == events[0].timestamp {
                continue;
            }
            let instant = event.timestamp;
            let prev_ts = events[..i]
                .iter()
                .rev()
                .find(|e| e.timestamp < instant)
                .map(|e| e.timestamp)
                .expect("checked above");
            let delay_days = (instant - prev_ts) as f64 / SECONDS_PER_DAY;
            let label = match target {
                TargetKind::Price => price_class(event.price_cents)?,
                TargetKind::Time => time_class(delay_days)?,
            };

            let features = match &cached {
                Some((ts, features)) if *ts == instant => features.clone(),
                _ => {
                    let features = extract_features(
                        dataset,
                        graph,
                        user_id,
                        instant,
                        target,
                        include_cross_target,
                    )?;
                    cached = Some((instant, features.clone()));
                    features
                }
            };

            let history = events_before(events, instant);
            let prior_class_history = match target {
                TargetKind::Price => history
                    .iter()
                    .map(|e| price_class(e.price_cents))
                    .collect::<Result<Vec<_>, _>>()?,
                TargetKind::Time => history
                    .windows(2)
                    .map(|w| time_class((w[1].timestamp - w[0].timestamp) as f64 / SECONDS_PER_DAY))
                    .collect::<Result<Vec<_>, _>>()?,
            };

            instances.push(Instance {
                user_id: user_id.clone(),
                instant,
                label,
                prior_class_history,
                features,
            });
        }
    }
    Ok(instances)
}
