//! Demographic and income breakdowns of the purchase log, plus the
//! population-level distribution views.

use crate::datastore::{DataError, Dataset, Gender, UserProfile};
use crate::stats;
use std::collections::{BTreeMap, BTreeSet};

/// Aggregates for one demographic or income group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub key: String,
    pub population: usize,
    pub shoppers: usize,
    pub shopper_fraction: f64,
    pub purchases_per_shopper: f64,
    pub mean_price_cents: f64,
    pub total_spend_cents: i64,
}

#[derive(Debug, Clone)]
pub enum Grouping {
    /// Gender crossed with contiguous age buckets `[edges[i], edges[i+1])`.
    GenderAge { age_edges: Vec<u32> },
    /// Equal-population quantile buckets over joined income.
    IncomeBuckets(usize),
}

/// Five-year age bands covering [18, 80].
pub fn default_age_edges() -> Vec<u32> {
    let mut edges: Vec<u32> = (18..=78).step_by(5).collect();
    edges.push(81);
    edges
}

fn age_bucket_label(edges: &[u32], age: u32) -> Option<String> {
    for w in edges.windows(2) {
        if age >= w[0] && age < w[1] {
            return Some(format!("{}-{}", w[0], w[1] - 1));
        }
    }
    None
}

/// Per-group shopper fraction and purchase aggregates. The shopper fraction
/// is measured against `population`, which should be the full population
/// file including non-shoppers.
pub fn group_stats(
    dataset: &Dataset,
    population: &[UserProfile],
    grouping: &Grouping,
) -> Result<Vec<GroupStats>, DataError> {
    // (sort index, label) -> members
    let mut groups: BTreeMap<(usize, String), Vec<&UserProfile>> = BTreeMap::new();
    match grouping {
        Grouping::GenderAge { age_edges } => {
            if age_edges.len() < 2 || age_edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(DataError::Invalid(
                    "age bucket edges must be strictly increasing".to_string(),
                ));
            }
            for profile in population {
                let age = match profile.age {
                    Some(a) => a,
                    None => continue,
                };
                if profile.gender == Gender::Unknown {
                    continue;
                }
                if let Some(bucket) = age_bucket_label(age_edges, age) {
                    let gender_index = if profile.gender == Gender::Female { 0 } else { 1 };
                    let key = format!("{}/{}", profile.gender.as_str(), bucket);
                    groups.entry((gender_index, key)).or_default().push(profile);
                }
            }
        }
        Grouping::IncomeBuckets(n) => {
            if *n == 0 {
                return Err(DataError::Invalid("need at least one income bucket".to_string()));
            }
            let mut with_income: Vec<&UserProfile> = population
                .iter()
                .filter(|p| p.income_cents.is_some())
                .collect();
            if with_income.is_empty() {
                return Err(DataError::IncomeNotJoined);
            }
            with_income.sort_by(|a, b| {
                (a.income_cents, &a.user_id).cmp(&(b.income_cents, &b.user_id))
            });
            let total = with_income.len();
            let base = total / n;
            let extra = total % n;
            let mut start = 0;
            for bucket in 0..*n {
                let size = base + usize::from(bucket < extra);
                if size == 0 {
                    continue;
                }
                let members = with_income[start..start + size].to_vec();
                groups.insert((bucket, format!("income-q{}", bucket + 1)), members);
                start += size;
            }
        }
    }

    let mut out = Vec::new();
    for ((_, key), members) in groups {
        let population_count = members.len();
        let mut shoppers = 0usize;
        let mut purchases = 0usize;
        let mut total_spend = 0i64;
        for member in &members {
            let events = dataset.events_of(&member.user_id);
            if events.is_empty() {
                continue;
            }
            shoppers += 1;
            purchases += events.len();
            total_spend += events.iter().map(|e| e.price_cents).sum::<i64>();
        }
        out.push(GroupStats {
            key,
            population: population_count,
            shoppers,
            shopper_fraction: shoppers as f64 / population_count as f64,
            purchases_per_shopper: if shoppers > 0 {
                purchases as f64 / shoppers as f64
            } else {
                0.0
            },
            mean_price_cents: if purchases > 0 {
                total_spend as f64 / purchases as f64
            } else {
                0.0
            },
            total_spend_cents: total_spend,
        });
    }
    Ok(out)
}

/// One category's purchase-share difference between two groups, with a
/// two-proportion z statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryDiff {
    pub category: String,
    pub share_a: f64,
    pub share_b: f64,
    pub diff: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone)]
pub struct DistinctiveReport {
    /// Categories whose share of group A's purchases most exceeds group B's.
    pub top_a: Vec<CategoryDiff>,
    /// The mirror image: most B-distinctive categories.
    pub top_b: Vec<CategoryDiff>,
}

/// Ranks categories at the given taxonomy level by the difference between
/// the share of each group's purchases they account for.
pub fn distinctive_categories(
    dataset: &Dataset,
    group_a: &BTreeSet<String>,
    group_b: &BTreeSet<String>,
    level: u8,
    top_k: usize,
) -> Result<DistinctiveReport, DataError> {
    if !(1..=3).contains(&level) {
        return Err(DataError::Invalid(format!("unknown taxonomy level {level}")));
    }
    let count_group = |group: &BTreeSet<String>| {
        let mut total = 0usize;
        let mut per_category: BTreeMap<String, usize> = BTreeMap::new();
        for user in group {
            for event in dataset.events_of(user) {
                total += 1;
                if let Some(label) = event.category.as_ref().and_then(|c| c.label(level)) {
                    *per_category.entry(label.to_string()).or_insert(0) += 1;
                }
            }
        }
        (total, per_category)
    };
    let (n_a, counts_a) = count_group(group_a);
    let (n_b, counts_b) = count_group(group_b);
    if n_a == 0 || n_b == 0 {
        return Err(DataError::Invalid(
            "both groups need at least one purchase".to_string(),
        ));
    }

    let categories: BTreeSet<&String> = counts_a.keys().chain(counts_b.keys()).collect();
    let mut diffs: Vec<CategoryDiff> = categories
        .into_iter()
        .map(|category| {
            let x_a = counts_a.get(category).copied().unwrap_or(0);
            let x_b = counts_b.get(category).copied().unwrap_or(0);
            let share_a = x_a as f64 / n_a as f64;
            let share_b = x_b as f64 / n_b as f64;
            let pooled = (x_a + x_b) as f64 / (n_a + n_b) as f64;
            let denom = (pooled * (1.0 - pooled) * (1.0 / n_a as f64 + 1.0 / n_b as f64)).sqrt();
            let z = if denom > 0.0 { (share_a - share_b) / denom } else { 0.0 };
            CategoryDiff {
                category: category.clone(),
                share_a,
                share_b,
                diff: share_a - share_b,
                z,
                p_value: stats::two_sided_p(z),
            }
        })
        .collect();

    diffs.sort_by(|a, b| {
        b.diff
            .partial_cmp(&a.diff)
            .unwrap()
            .then_with(|| a.category.cmp(&b.category))
    });
    let top_a: Vec<CategoryDiff> = diffs.iter().take(top_k).cloned().collect();
    let mut top_b: Vec<CategoryDiff> = diffs.iter().rev().take(top_k).cloned().collect();
    top_b.sort_by(|a, b| {
        a.diff
            .partial_cmp(&b.diff)
            .unwrap()
            .then_with(|| a.category.cmp(&b.category))
    });
    Ok(DistinctiveReport { top_a, top_b })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionMetric {
    PurchasesPerUser,
    SpendPerUser,
    PurchasesPerItem,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub pdf: f64,
    pub cdf: f64,
}

#[derive(Debug, Clone)]
pub struct Histogram {
    pub bins: Vec<HistogramBin>,
    pub total: usize,
}

/// Raw values behind a [`distribution`] histogram.
pub fn metric_values(dataset: &Dataset, metric: DistributionMetric) -> Vec<f64> {
    match metric {
        DistributionMetric::PurchasesPerUser => dataset
            .iter_user_events()
            .map(|(_, events)| events.len() as f64)
            .collect(),
        DistributionMetric::SpendPerUser => dataset
            .iter_user_events()
            .map(|(_, events)| events.iter().map(|e| e.price_cents).sum::<i64>() as f64)
            .collect(),
        DistributionMetric::PurchasesPerItem => {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for event in dataset.iter_events() {
                *counts.entry(&event.item_id).or_insert(0) += 1;
            }
            counts.values().map(|&c| c as f64).collect()
        }
    }
}

/// Histogram over log-spaced (powers of two) bins with PDF and CDF.
/// Values below 1 share the `[0, 1)` bin.
pub fn distribution(dataset: &Dataset, metric: DistributionMetric) -> Result<Histogram, DataError> {
    let values = metric_values(dataset, metric);
    if values.is_empty() {
        return Err(DataError::Invalid("empty dataset".to_string()));
    }
    let mut bin_counts: BTreeMap<i32, usize> = BTreeMap::new();
    for &v in &values {
        let k = if v < 1.0 { -1 } else { v.log2().floor() as i32 };
        *bin_counts.entry(k).or_insert(0) += 1;
    }
    let total = values.len();
    let mut cumulative = 0usize;
    let bins = bin_counts
        .into_iter()
        .map(|(k, count)| {
            cumulative += count;
            let (lower, upper) = if k < 0 {
                (0.0, 1.0)
            } else {
                (2f64.powi(k), 2f64.powi(k + 1))
            };
            HistogramBin {
                lower,
                upper,
                count,
                pdf: count as f64 / total as f64,
                cdf: cumulative as f64 / total as f64,
            }
        })
        .collect();
    Ok(Histogram { bins, total })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceBin {
    pub lower: f64,
    pub upper: f64,
    pub n_items: usize,
    pub mean_purchase_count: f64,
}

#[derive(Debug, Clone)]
pub struct PricePopularity {
    pub bins: Vec<PriceBin>,
    /// Spearman rank correlation of (item price, item purchase count).
    pub spearman: f64,
}

/// Bins items by price (log-spaced) and reports the per-bin mean number of
/// times items were purchased, plus the overall price-popularity rank
/// correlation.
pub fn price_popularity(
    dataset: &Dataset,
    n_price_bins: usize,
) -> Result<PricePopularity, DataError> {
    let mut per_item: BTreeMap<&str, (f64, usize)> = BTreeMap::new(); // (price sum, count)
    for event in dataset.iter_events() {
        let entry = per_item.entry(&event.item_id).or_insert((0.0, 0));
        entry.0 += event.price_cents as f64;
        entry.1 += 1;
    }
    let items: Vec<(f64, f64)> = per_item
        .values()
        .map(|&(price_sum, count)| (price_sum / count as f64, count as f64))
        .collect();
    let prices: Vec<f64> = items.iter().map(|&(p, _)| p).collect();
    let counts: Vec<f64> = items.iter().map(|&(_, c)| c).collect();
    let distinct: BTreeSet<u64> = prices.iter().map(|p| p.to_bits()).collect();
    if distinct.len() < 2 {
        return Err(DataError::Invalid(
            "price popularity needs at least two distinct item prices".to_string(),
        ));
    }
    if n_price_bins == 0 {
        return Err(DataError::Invalid("need at least one price bin".to_string()));
    }

    let lo = prices.iter().cloned().fold(f64::INFINITY, f64::min).max(1.0);
    let hi = prices.iter().cloned().fold(0.0f64, f64::max);
    let log_lo = lo.ln();
    let log_hi = hi.ln();
    let step = (log_hi - log_lo) / n_price_bins as f64;
    let mut bins: Vec<(f64, f64, usize, f64)> = (0..n_price_bins)
        .map(|i| {
            (
                (log_lo + step * i as f64).exp(),
                (log_lo + step * (i + 1) as f64).exp(),
                0usize,
                0.0f64,
            )
        })
        .collect();
    for &(price, count) in &items {
        let idx = if price >= hi {
            n_price_bins - 1
        } else {
            let raw = ((price.max(lo).ln() - log_lo) / step) as usize;
            raw.min(n_price_bins - 1)
        };
        bins[idx].2 += 1;
        bins[idx].3 += count;
    }

    Ok(PricePopularity {
        bins: bins
            .into_iter()
            .map(|(lower, upper, n_items, count_sum)| PriceBin {
                lower,
                upper,
                n_items,
                mean_purchase_count: if n_items > 0 { count_sum / n_items as f64 } else { 0.0 },
            })
            .collect(),
        spearman: stats::spearman(&prices, &counts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::{ingest_and_filter, CategoryTaxonomy, EventRecord};

    fn event(user: &str, ts: i64, item: &str, price: i64, cat1: &str) -> EventRecord {
        EventRecord {
            user_id: user.to_string(),
            ts,
            item_id: item.to_string(),
            item_name: item.to_string(),
            price_cents: price,
            order_id: format!("o-{user}-{ts}"),
            merchant_id: "m".to_string(),
            cat1: cat1.to_string(),
            cat2: String::new(),
            cat3: String::new(),
        }
    }

    fn profile(user: &str, gender: Gender, age: u32) -> UserProfile {
        UserProfile {
            user_id: user.to_string(),
            gender,
            age: Some(age),
            zip: None,
            income_cents: None,
        }
    }

    fn dataset(records: Vec<EventRecord>, profiles: Vec<UserProfile>) -> Dataset {
        ingest_and_filter(records, profiles, CategoryTaxonomy::new(), 1000, None).dataset
    }

    #[test]
    fn shopper_fractions_are_direct_ratios() {
        // population 10 women / 10 men; 6 women and 4 men shop
        let mut population = Vec::new();
        let mut records = Vec::new();
        for i in 0..10 {
            population.push(profile(&format!("f{i}"), Gender::Female, 30));
            population.push(profile(&format!("m{i}"), Gender::Male, 30));
            if i < 6 {
                records.push(event(&format!("f{i}"), 100 + i as i64, "x", 100, ""));
            }
            if i < 4 {
                records.push(event(&format!("m{i}"), 200 + i as i64, "y", 100, ""));
            }
        }
        let ds = dataset(records, population.clone());
        let stats = group_stats(
            &ds,
            &population,
            &Grouping::GenderAge { age_edges: vec![18, 81] },
        )
        .unwrap();
        assert_eq!(stats.len(), 2);
        let female = stats.iter().find(|s| s.key.starts_with("female")).unwrap();
        let male = stats.iter().find(|s| s.key.starts_with("male")).unwrap();
        assert!((female.shopper_fraction - 0.6).abs() < 1e-12);
        assert!((male.shopper_fraction - 0.4).abs() < 1e-12);
    }

    #[test]
    fn group_mean_and_total_are_plain_arithmetic() {
        let population = vec![profile("u1", Gender::Female, 30)];
        let ds = dataset(
            vec![event("u1", 1, "a", 1000, ""), event("u1", 2, "b", 2000, "")],
            population.clone(),
        );
        let stats = group_stats(
            &ds,
            &population,
            &Grouping::GenderAge { age_edges: vec![18, 81] },
        )
        .unwrap();
        assert_eq!(stats.len(), 1);
        assert!((stats[0].mean_price_cents - 1500.0).abs() < 1e-12);
        assert_eq!(stats[0].total_spend_cents, 3000);
        assert!((stats[0].purchases_per_shopper - 2.0).abs() < 1e-12);
    }

    #[test]
    fn group_totals_partition_the_shopper_universe() {
        let mut population = Vec::new();
        let mut records = Vec::new();
        for i in 0..30 {
            let gender = if i % 2 == 0 { Gender::Female } else { Gender::Male };
            let user = format!("u{i}");
            population.push(profile(&user, gender, 18 + (i % 60) as u32));
            records.push(event(&user, 100 + i as i64, "x", 100 + i as i64, ""));
        }
        let ds = dataset(records, population.clone());
        let stats = group_stats(
            &ds,
            &population,
            &Grouping::GenderAge { age_edges: default_age_edges() },
        )
        .unwrap();
        let shoppers: usize = stats.iter().map(|s| s.shoppers).sum();
        let spend: i64 = stats.iter().map(|s| s.total_spend_cents).sum();
        assert_eq!(shoppers, ds.shopper_count());
        assert_eq!(spend, ds.iter_events().map(|e| e.price_cents).sum::<i64>());
    }

    #[test]
    fn income_grouping_without_join_is_an_error() {
        let population = vec![profile("u1", Gender::Female, 30)];
        let ds = dataset(vec![event("u1", 1, "a", 100, "")], population.clone());
        assert!(matches!(
            group_stats(&ds, &population, &Grouping::IncomeBuckets(2)),
            Err(DataError::IncomeNotJoined)
        ));
    }

    #[test]
    fn income_buckets_are_equal_population() {
        let mut population = Vec::new();
        for i in 0..10 {
            let mut p = profile(&format!("u{i}"), Gender::Female, 30);
            p.income_cents = Some(1_000_000 + i as i64 * 10_000);
            population.push(p);
        }
        let ds = dataset(vec![event("u0", 1, "a", 100, "")], population.clone());
        let stats = group_stats(&ds, &population, &Grouping::IncomeBuckets(5)).unwrap();
        assert_eq!(stats.len(), 5);
        assert!(stats.iter().all(|s| s.population == 2));
        assert_eq!(stats[0].key, "income-q1");
    }

    #[test]
    fn distinctive_extreme_split() {
        let ds = dataset(
            vec![event("a", 1, "i1", 100, "X"), event("b", 2, "i2", 100, "Y")],
            vec![],
        );
        let group_a: BTreeSet<String> = ["a".to_string()].into();
        let group_b: BTreeSet<String> = ["b".to_string()].into();
        let report = distinctive_categories(&ds, &group_a, &group_b, 1, 1).unwrap();
        assert_eq!(report.top_a[0].category, "X");
        assert!((report.top_a[0].diff - 1.0).abs() < 1e-12);
        assert_eq!(report.top_b[0].category, "Y");
        assert!((report.top_b[0].diff + 1.0).abs() < 1e-12);
    }

    #[test]
    fn distinctive_group_against_itself_is_zero() {
        let ds = dataset(
            vec![
                event("a", 1, "i1", 100, "X"),
                event("a", 2, "i2", 100, "Y"),
                event("b", 3, "i3", 100, "X"),
            ],
            vec![],
        );
        let group: BTreeSet<String> = ["a".to_string(), "b".to_string()].into();
        let report = distinctive_categories(&ds, &group, &group, 1, 10).unwrap();
        assert!(report.top_a.iter().all(|d| d.diff == 0.0 && d.z == 0.0));
    }

    #[test]
    fn distinctive_rejects_unknown_level_and_empty_groups() {
        let ds = dataset(vec![event("a", 1, "i1", 100, "X")], vec![]);
        let group: BTreeSet<String> = ["a".to_string()].into();
        assert!(distinctive_categories(&ds, &group, &group, 4, 1).is_err());
        let empty = BTreeSet::new();
        assert!(distinctive_categories(&ds, &group, &empty, 1, 1).is_err());
    }

    #[test]
    fn distribution_counts_match_direct_pdf() {
        // per-user counts [1, 1, 2]
        let ds = dataset(
            vec![
                event("a", 1, "i", 100, ""),
                event("b", 2, "i", 100, ""),
                event("c", 3, "i", 100, ""),
                event("c", 4, "i", 100, ""),
            ],
            vec![],
        );
        let hist = distribution(&ds, DistributionMetric::PurchasesPerUser).unwrap();
        assert_eq!(hist.bins.len(), 2);
        assert_eq!(hist.bins[0].lower, 1.0);
        assert!((hist.bins[0].pdf - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(hist.bins[1].lower, 2.0);
        assert!((hist.bins[1].pdf - 1.0 / 3.0).abs() < 1e-12);
        let last = hist.bins.last().unwrap();
        assert!((last.cdf - 1.0).abs() < 1e-12);
        let pdf_sum: f64 = hist.bins.iter().map(|b| b.pdf).sum();
        assert!((pdf_sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn price_popularity_two_point_negative() {
        let ds = dataset(
            vec![
                event("a", 1, "cheap", 100, ""),
                event("a", 2, "cheap", 100, ""),
                event("b", 3, "cheap", 100, ""),
                event("c", 4, "dear", 200, ""),
            ],
            vec![],
        );
        let report = price_popularity(&ds, 2).unwrap();
        assert!((report.spearman + 1.0).abs() < 1e-12);
        let total_items: usize = report.bins.iter().map(|b| b.n_items).sum();
        assert_eq!(total_items, 2);
    }

    #[test]
    fn price_popularity_constant_counts_is_zero() {
        let ds = dataset(
            vec![event("a", 1, "x", 100, ""), event("b", 2, "y", 200, "")],
            vec![],
        );
        assert_eq!(price_popularity(&ds, 2).unwrap().spearman, 0.0);
    }

    #[test]
    fn price_popularity_needs_two_prices() {
        let ds = dataset(vec![event("a", 1, "x", 100, "")], vec![]);
        assert!(price_popularity(&ds, 2).is_err());
    }
}
