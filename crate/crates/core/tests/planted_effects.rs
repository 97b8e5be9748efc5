//! Generator-oracle tests: each analysis is run against a synthetic
//! population whose effect strengths are known, and the measured values are
//! checked against the planted parameters.

use spendlens_core::cohort::{
    distinctive_categories, group_stats, metric_values, price_popularity, DistributionMetric,
    Grouping,
};
use spendlens_core::datastore::Gender;
use spendlens_core::social::cohort_similarity;
use spendlens_core::stats;
use spendlens_core::synthgen::{generate, SynthConfig};
use spendlens_core::temporal::{
    activity_profile, budget_curve, delay_distribution, month_boundary_test, Granularity,
};
use std::collections::BTreeSet;

#[test]
fn income_gradient_shows_up_as_increasing_bucket_spend() {
    let output = generate(&SynthConfig::income_gradient(5000, 1.0, 21)).expect("generate");
    let dataset = output.dataset().dataset;
    let population: Vec<_> = dataset.profiles().cloned().collect();
    let buckets = group_stats(&dataset, &population, &Grouping::IncomeBuckets(5)).expect("stats");
    assert_eq!(buckets.len(), 5);
    for pair in buckets.windows(2) {
        assert!(
            pair[1].total_spend_cents > pair[0].total_spend_cents,
            "bucket spend not strictly increasing: {} then {}",
            pair[0].total_spend_cents,
            pair[1].total_spend_cents
        );
    }
}

#[test]
fn gender_preference_drives_distinctive_categories() {
    // gender_strength concentrates female purchases on the first level-1
    // subtree (leaves 0..4 live under c1-00)
    let config = SynthConfig {
        social: spendlens_core::synthgen::SocialConfig {
            n_communities: 0,
            mean_degree: 0,
            community_strength: 0.0,
            gender_strength: 2.0,
            female_block: 4,
            male_block: 12,
        },
        ..SynthConfig::null_model(4000, 22)
    };
    let output = generate(&config).expect("generate");
    let dataset = output.dataset().dataset;
    let women: BTreeSet<String> = dataset
        .profiles()
        .filter(|p| p.gender == Gender::Female)
        .map(|p| p.user_id.clone())
        .collect();
    let men: BTreeSet<String> = dataset
        .profiles()
        .filter(|p| p.gender == Gender::Male)
        .map(|p| p.user_id.clone())
        .collect();
    let report = distinctive_categories(&dataset, &women, &men, 1, 3).expect("distinctive");
    assert_eq!(
        report.top_a[0].category, "c1-00",
        "female-preferred subtree should rank most female-distinctive: {:?}",
        report.top_a
    );
    assert!(report.top_a[0].diff > 0.0);
    assert!(report.top_a[0].p_value < 0.01, "planted share difference should be significant");
}

#[test]
fn purchase_count_tail_recovers_the_planted_mixture() {
    // mixture [(4,.3),(6,.3),(8,.2),(12,.2)]: the 95th percentile of
    // per-user counts is the top mixture component
    let output = generate(&SynthConfig::null_model(5000, 23)).expect("generate");
    let dataset = output.dataset().dataset;
    let counts = metric_values(&dataset, DistributionMetric::PurchasesPerUser);
    let p95 = stats::quantile(&counts, 0.95).expect("quantile");
    assert!(
        (p95 - 12.0).abs() / 12.0 <= 0.10,
        "p95 of per-user counts {p95} not within 10% of the planted 12"
    );
}

#[test]
fn inverse_price_popularity_is_strongly_negative() {
    let output = generate(&SynthConfig::inverse_popularity(4000, 1.0, 24)).expect("generate");
    let dataset = output.dataset().dataset;
    let report = price_popularity(&dataset, 10).expect("popularity");
    assert!(
        report.spearman < -0.5,
        "planted 1/price popularity gave correlation {}",
        report.spearman
    );
}

#[test]
fn weekly_cycled_buyers_show_delay_pdf_maxima_at_multiples_of_seven() {
    let output = generate(&SynthConfig::delay_weekly(3000, 25)).expect("generate");
    let dataset = output.dataset().dataset;
    let dist = delay_distribution(&dataset);
    let pdf_at = |day: u32| {
        dist.bins
            .iter()
            .find(|b| b.day == day)
            .map(|b| b.pdf)
            .unwrap_or(0.0)
    };
    for peak in [7u32, 14] {
        assert!(
            pdf_at(peak) > pdf_at(peak - 1) && pdf_at(peak) > pdf_at(peak + 1),
            "no local PDF maximum at {peak} days: {} vs {} / {}",
            pdf_at(peak),
            pdf_at(peak - 1),
            pdf_at(peak + 1)
        );
    }
}

#[test]
fn null_model_shows_no_effects() {
    // all strengths zero, but with a contact graph so similarity is defined
    let config = SynthConfig {
        social: spendlens_core::synthgen::SocialConfig {
            n_communities: 10,
            mean_degree: 3,
            community_strength: 0.0,
            gender_strength: 0.0,
            female_block: 4,
            male_block: 12,
        },
        ..SynthConfig::null_model(4000, 26)
    };
    let output = generate(&config).expect("generate");
    let dataset = output.dataset().dataset;
    let graph = output.graph();

    // weekly ratio near one
    let profile = activity_profile(&dataset, Granularity::DayOfWeek, None);
    let ratio = profile.monday_sunday_ratio.expect("defined");
    assert!((ratio - 1.0).abs() < 0.1, "null weekly ratio {ratio}");
    assert_eq!(
        profile.slot_counts.iter().sum::<u64>() as usize,
        dataset.event_count()
    );

    // per-cohort budget correlation near zero (single-count cohort avoids
    // the pooling artifact)
    let curve = budget_curve(&dataset, (6, 6), None).expect("curve");
    assert!(
        curve.event_spearman.abs() < 0.1,
        "null budget correlation {}",
        curve.event_spearman
    );

    // connected and random pairs equally similar within two standard errors
    let report = cohort_similarity(&dataset, &graph, 1500, 3, false).expect("similarity");
    for level in &report.levels {
        let gap = (level.connected.mean - level.random.mean).abs();
        let se = (level.connected.se.powi(2) + level.random.se.powi(2)).sqrt();
        assert!(
            gap <= 2.0 * se,
            "level {}: null homophily gap {gap} exceeds 2 se ({se})",
            level.level
        );
    }

    // no month-boundary effect: mean spend ratio near one
    let rows = month_boundary_test(&dataset, None);
    assert!(rows.len() >= 6);
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.spend_ratio).collect();
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!(
        (0.9..=1.1).contains(&mean_ratio),
        "null first/last Monday mean ratio {mean_ratio}"
    );
}
