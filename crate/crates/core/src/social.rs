//! Purchase-similarity comparison between email-connected user pairs and
//! random unconnected pairs, at each taxonomy level.

use crate::datastore::{DataError, Dataset, EmailGraph, Gender};
use crate::stats;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::{BTreeMap, BTreeSet};

/// Sparse purchase-frequency vector over categories at one taxonomy level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryVector {
    pub level: u8,
    counts: BTreeMap<String, u64>,
}

impl CategoryVector {
    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Frequency counts of a user's categorized purchases at the given level.
/// Uncategorized events (or events without a label at that level) are
/// excluded; a user with none at all is an error.
pub fn category_vector(
    dataset: &Dataset,
    user_id: &str,
    level: u8,
) -> Result<CategoryVector, DataError> {
    if !(1..=3).contains(&level) {
        return Err(DataError::Invalid(format!("unknown taxonomy level {level}")));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for event in dataset.events_of(user_id) {
        if let Some(label) = event.category.as_ref().and_then(|c| c.label(level)) {
            *counts.entry(label.to_string()).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(DataError::Invalid(format!(
            "user {user_id} has no categorized purchases at level {level}"
        )));
    }
    Ok(CategoryVector { level, counts })
}

/// Cosine similarity over the union key space. Non-negative counts keep the
/// result in [0, 1].
pub fn cosine(a: &CategoryVector, b: &CategoryVector) -> Result<f64, DataError> {
    if a.is_empty() || b.is_empty() {
        return Err(DataError::Invalid("cosine of an empty vector".to_string()));
    }
    let mut dot = 0.0f64;
    for (key, &count_a) in &a.counts {
        if let Some(&count_b) = b.counts.get(key) {
            dot += count_a as f64 * count_b as f64;
        }
    }
    let norm = |v: &CategoryVector| {
        v.counts
            .values()
            .map(|&c| (c as f64) * (c as f64))
            .sum::<f64>()
            .sqrt()
    };
    Ok(dot / (norm(a) * norm(b)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairCohortStats {
    pub mean: f64,
    pub n: usize,
    /// Standard error of the mean.
    pub se: f64,
}

fn pair_stats(sims: &[f64]) -> PairCohortStats {
    let mean = stats::mean(sims).unwrap_or(0.0);
    let se = stats::std_samp(sims)
        .map(|s| s / (sims.len() as f64).sqrt())
        .unwrap_or(0.0);
    PairCohortStats { mean, n: sims.len(), se }
}

#[derive(Debug, Clone)]
pub struct LevelSimilarity {
    pub level: u8,
    pub connected: PairCohortStats,
    pub random: PairCohortStats,
    /// connected mean over random mean, minus one.
    pub lift: f64,
    /// Keys "ff", "mm", "fm"; present when requested.
    pub by_gender: Option<BTreeMap<String, PairCohortStats>>,
}

#[derive(Debug, Clone)]
pub struct SimilarityReport {
    pub levels: Vec<LevelSimilarity>,
    pub n_pairs: usize,
    pub seed: u64,
}

/// Compares mean cosine similarity of sampled connected shopper pairs with an
/// equal number of random non-connected shopper pairs, at all three levels.
///
/// Both endpoints of every pair must be shoppers with at least one
/// categorized purchase. With `by_gender`, connected pairs are further broken
/// down into female-female, male-male, and mixed pairs.
pub fn cohort_similarity(
    dataset: &Dataset,
    graph: &EmailGraph,
    n_pairs: usize,
    seed: u64,
    by_gender: bool,
) -> Result<SimilarityReport, DataError> {
    if n_pairs == 0 {
        return Err(DataError::Invalid("need at least one pair".to_string()));
    }
    // eligible: shoppers with a non-empty level-1 vector
    let mut vectors: BTreeMap<&str, [CategoryVector; 3]> = BTreeMap::new();
    for user in dataset.users() {
        if let Ok(v1) = category_vector(dataset, user, 1) {
            let v2 = category_vector(dataset, user, 2)
                .unwrap_or(CategoryVector { level: 2, counts: BTreeMap::new() });
            let v3 = category_vector(dataset, user, 3)
                .unwrap_or(CategoryVector { level: 3, counts: BTreeMap::new() });
            vectors.insert(user, [v1, v2, v3]);
        }
    }
    let eligible: Vec<&str> = vectors.keys().copied().collect();

    let connected_pool: Vec<(&str, &str)> = graph
        .edges()
        .filter(|(a, b, _)| vectors.contains_key(a) && vectors.contains_key(b))
        .map(|(a, b, _)| (a, b))
        .collect();
    if connected_pool.len() < n_pairs {
        return Err(DataError::Invalid(format!(
            "need {n_pairs} connected shopper pairs, found only {}",
            connected_pool.len()
        )));
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let connected_pairs: Vec<(&str, &str)> =
        rand::seq::index::sample(&mut rng, connected_pool.len(), n_pairs)
            .into_iter()
            .map(|i| connected_pool[i])
            .collect();

    // random pairs: uniform over eligible shoppers, rejecting self pairs,
    // direct edges, and duplicates
    let mut random_pairs: Vec<(&str, &str)> = Vec::with_capacity(n_pairs);
    let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut attempts = 0usize;
    let max_attempts = n_pairs.saturating_mul(1000).max(100_000);
    while random_pairs.len() < n_pairs {
        attempts += 1;
        if attempts > max_attempts {
            return Err(DataError::Invalid(format!(
                "could not sample {n_pairs} non-connected shopper pairs"
            )));
        }
        let a = eligible[rng.random_range(0..eligible.len())];
        let b = eligible[rng.random_range(0..eligible.len())];
        if a == b || graph.contains_edge(a, b) {
            continue;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if !seen.insert(key) {
            continue;
        }
        random_pairs.push((a, b));
    }

    let gender_of = |user: &str| dataset.profile(user).map(|p| p.gender).unwrap_or(Gender::Unknown);
    let pair_key = |a: &str, b: &str| match (gender_of(a), gender_of(b)) {
        (Gender::Female, Gender::Female) => Some("ff"),
        (Gender::Male, Gender::Male) => Some("mm"),
        (Gender::Female, Gender::Male) | (Gender::Male, Gender::Female) => Some("fm"),
        _ => None,
    };

    let mut levels = Vec::with_capacity(3);
    for level in 1u8..=3 {
        let idx = (level - 1) as usize;
        let sims_of = |pairs: &[(&str, &str)]| -> Vec<f64> {
            pairs
                .iter()
                .filter_map(|&(a, b)| {
                    let va = &vectors[a][idx];
                    let vb = &vectors[b][idx];
                    if va.is_empty() || vb.is_empty() {
                        None
                    } else {
                        cosine(va, vb).ok()
                    }
                })
                .collect()
        };
        let connected_sims = sims_of(&connected_pairs);
        let random_sims = sims_of(&random_pairs);
        let connected = pair_stats(&connected_sims);
        let random = pair_stats(&random_sims);
        let lift = if random.mean > 0.0 {
            connected.mean / random.mean - 1.0
        } else {
            0.0
        };

        let by_gender = by_gender.then(|| {
            let mut partitions: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for &(a, b) in &connected_pairs {
                let va = &vectors[a][idx];
                let vb = &vectors[b][idx];
                if va.is_empty() || vb.is_empty() {
                    continue;
                }
                if let (Some(key), Ok(sim)) = (pair_key(a, b), cosine(va, vb)) {
                    partitions.entry(key.to_string()).or_default().push(sim);
                }
            }
            partitions
                .into_iter()
                .map(|(key, sims)| (key, pair_stats(&sims)))
                .collect()
        });

        levels.push(LevelSimilarity { level, connected, random, lift, by_gender });
    }

    Ok(SimilarityReport { levels, n_pairs, seed })
}
