//! Seeded synthetic population generator. Every behavioral effect the
//! analytics modules measure can be planted here with a known strength, so
//! tests compare measured values against generator ground truth. Also renders
//! receipt emails for parser round trips.

use crate::datastore::{
    build_graph, ingest_and_filter, CategoryPath, CategoryTaxonomy, Dataset, EmailGraph,
    EventRecord, Gender, IngestOutcome, UserProfile, ZipIncomeRow,
};
use crate::receipt::{self, Template, TemplateSet};
use chrono::{DateTime, Datelike};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

const SECONDS_PER_DAY: i64 = 86_400;
/// Monday 2014-02-03 00:00 UTC.
pub const DEFAULT_WINDOW_START: i64 = 1_391_385_600;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible config: {0}")]
    InfeasibleConfig(String),
    #[error("no template for merchant {0}")]
    MissingTemplate(String),
    #[error(transparent)]
    Receipt(#[from] crate::receipt::ReceiptError),
    #[error(transparent)]
    Data(#[from] crate::datastore::DataError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

/// How within-user purchase times are laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DelayProfile {
    /// Independent purchase days over the window (day-of-week weighted).
    IidDays,
    /// Successive gaps uniform in `[min_days, max_days]`, same for everyone.
    UniformGaps { min_days: u32, max_days: u32 },
    /// Gap range chosen by the user's purchase count: (count, min, max).
    CountCoupledGaps { ranges: Vec<(usize, u32, u32)> },
    /// Gaps near multiples of seven days.
    WeeklyGaps { max_weeks: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurringCycle {
    pub cycle_days: f64,
    pub jitter_days: f64,
    /// Number of distinct consumable items shared by the population.
    pub n_consumables: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialConfig {
    pub n_communities: usize,
    /// Edges per user to random same-community users.
    pub mean_degree: usize,
    /// Weight of the community-preferred leaf block in item choice.
    pub community_strength: f64,
    /// Weight of the gender-preferred leaf block in item choice.
    pub gender_strength: f64,
    /// Leaves in the female-preferred block (smaller = more concentrated).
    pub female_block: usize,
    /// Leaves in the male-preferred block.
    pub male_block: usize,
}

impl Default for SocialConfig {
    fn default() -> Self {
        SocialConfig {
            n_communities: 0,
            mean_degree: 0,
            community_strength: 0.0,
            gender_strength: 0.0,
            female_block: 4,
            male_block: 12,
        }
    }
}

/// Every planted parameter of a synthetic population. Defaults are the null
/// model: no effect of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_users: usize,
    /// Epoch seconds, midnight UTC.
    pub window_start_ts: i64,
    pub window_days: u32,
    pub female_fraction: f64,
    pub n_zips: usize,
    pub n_merchants: usize,
    /// Taxonomy shape: level-1 nodes, level-2 per level-1, level-3 per level-2.
    pub taxonomy_shape: (usize, usize, usize),
    pub items_per_leaf: usize,
    /// Purchase-count mixture: (count, weight).
    pub purchase_counts: Vec<(usize, f64)>,
    pub delay_profile: DelayProfile,
    /// Gap-driven layouts start each user uniformly within this many days of
    /// the window start.
    pub start_spread_days: u32,
    /// Probability that a purchase joins the previous one's order (same
    /// instant); only applies to iid-days layouts.
    pub multi_item_order_prob: f64,
    /// Day-of-week weight for Mondays relative to Sundays (1.0 = flat week).
    pub monday_multiplier: f64,
    /// Strength of the work-hours diurnal bump (0 = uniform hours).
    pub diurnal_strength: f64,
    /// Price proportional to the delay since the previous purchase.
    pub budget_depletion: bool,
    /// Relative noise applied to planted depletion prices.
    pub price_noise: f64,
    /// Replace item base prices with iid uniform draws from this range;
    /// keeps null-model prices free of heavy tails.
    pub uniform_price_range: Option<(i64, i64)>,
    /// Extra purchases and price for higher-income users (0 = off).
    pub income_spend_elasticity: f64,
    /// Item choice weight proportional to (1/price)^strength (0 = off).
    pub popularity_inverse_price: f64,
    pub recurring: Option<RecurringCycle>,
    pub social: SocialConfig,
    /// Probability that a purchase price stays in the user's home class.
    pub class_repeat_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_users: 1000,
            window_start_ts: DEFAULT_WINDOW_START,
            window_days: 240,
            female_fraction: 0.5,
            n_zips: 50,
            n_merchants: 5,
            taxonomy_shape: (6, 4, 4),
            items_per_leaf: 4,
            purchase_counts: vec![(4, 0.3), (6, 0.3), (8, 0.2), (12, 0.2)],
            delay_profile: DelayProfile::IidDays,
            start_spread_days: 3,
            multi_item_order_prob: 0.0,
            monday_multiplier: 1.0,
            diurnal_strength: 0.0,
            budget_depletion: false,
            price_noise: 0.1,
            uniform_price_range: None,
            income_spend_elasticity: 0.0,
            popularity_inverse_price: 0.0,
            recurring: None,
            social: SocialConfig::default(),
            class_repeat_prob: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn null_model(n_users: usize, seed: u64) -> Self {
        SynthConfig { n_users, seed, ..SynthConfig::default() }
    }

    pub fn weekly(n_users: usize, monday_multiplier: f64, seed: u64) -> Self {
        SynthConfig {
            monday_multiplier,
            ..SynthConfig::null_model(n_users, seed)
        }
    }

    /// Every user makes exactly `count` purchases with gaps in
    /// `[1, max_delay]` days; with depletion on, prices track the gaps.
    pub fn budget(n_users: usize, count: usize, max_delay: u32, depletion: bool, seed: u64) -> Self {
        SynthConfig {
            purchase_counts: vec![(count, 1.0)],
            delay_profile: DelayProfile::UniformGaps { min_days: 1, max_days: max_delay },
            budget_depletion: depletion,
            ..SynthConfig::null_model(n_users, seed)
        }
    }

    /// Two purchase-count cohorts with coupled delay ranges and no planted
    /// price effect: pooling them reproduces the shuffle-test artifact.
    /// Weights balance the event counts of the two cohorts; the narrow price
    /// range keeps the per-event budget shares of the cohorts separated.
    pub fn mixed_counts_null(n_users: usize, seed: u64) -> Self {
        SynthConfig {
            purchase_counts: vec![(5, 5.0), (25, 1.0)],
            delay_profile: DelayProfile::CountCoupledGaps { ranges: vec![(5, 1, 30), (25, 1, 4)] },
            uniform_price_range: Some((500, 1500)),
            ..SynthConfig::null_model(n_users, seed)
        }
    }

    pub fn recurring(n_users: usize, cycle_days: f64, jitter_days: f64, seed: u64) -> Self {
        SynthConfig {
            recurring: Some(RecurringCycle { cycle_days, jitter_days, n_consumables: 3 }),
            ..SynthConfig::null_model(n_users, seed)
        }
    }

    pub fn delay_weekly(n_users: usize, seed: u64) -> Self {
        SynthConfig {
            purchase_counts: vec![(8, 1.0)],
            delay_profile: DelayProfile::WeeklyGaps { max_weeks: 3 },
            ..SynthConfig::null_model(n_users, seed)
        }
    }

    pub fn homophily(n_users: usize, strength: f64, seed: u64) -> Self {
        SynthConfig {
            social: SocialConfig {
                n_communities: 20,
                mean_degree: 4,
                community_strength: strength,
                gender_strength: 0.0,
                ..SocialConfig::default()
            },
            ..SynthConfig::null_model(n_users, seed)
        }
    }

    pub fn gender_assortative(n_users: usize, seed: u64) -> Self {
        SynthConfig {
            social: SocialConfig {
                n_communities: 20,
                mean_degree: 4,
                community_strength: 6.0,
                gender_strength: 4.0,
                female_block: 4,
                male_block: 12,
            },
            ..SynthConfig::null_model(n_users, seed)
        }
    }

    pub fn predictor_signal(n_users: usize, repeat_prob: f64, seed: u64) -> Self {
        SynthConfig {
            purchase_counts: vec![(8, 0.4), (10, 0.3), (14, 0.3)],
            delay_profile: DelayProfile::UniformGaps { min_days: 1, max_days: 18 },
            start_spread_days: 90,
            class_repeat_prob: repeat_prob,
            social: SocialConfig {
                n_communities: 50,
                mean_degree: 2,
                ..SocialConfig::default()
            },
            ..SynthConfig::null_model(n_users, seed)
        }
    }

    pub fn income_gradient(n_users: usize, elasticity: f64, seed: u64) -> Self {
        SynthConfig {
            income_spend_elasticity: elasticity,
            ..SynthConfig::null_model(n_users, seed)
        }
    }

    pub fn inverse_popularity(n_users: usize, strength: f64, seed: u64) -> Self {
        SynthConfig {
            popularity_inverse_price: strength,
            ..SynthConfig::null_model(n_users, seed)
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: &str| Err(SynthError::InfeasibleConfig(msg.to_string()));
        if self.n_users == 0 {
            return bad("n_users must be positive");
        }
        if !(0.0..=1.0).contains(&self.female_fraction) {
            return bad("female_fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.class_repeat_prob)
            || !(0.0..=1.0).contains(&self.multi_item_order_prob)
        {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.purchase_counts.is_empty()
            || self.purchase_counts.iter().any(|&(c, w)| c == 0 || w < 0.0)
            || self.purchase_counts.iter().map(|&(_, w)| w).sum::<f64>() <= 0.0
        {
            return bad("purchase_counts must be a non-empty positive mixture");
        }
        if self.window_days == 0 {
            return bad("window must span at least one day");
        }
        if let DelayProfile::CountCoupledGaps { ranges: pairs } = &self.delay_profile {
            for &(count, _) in &self.purchase_counts {
                if !pairs.iter().any(|&(c, _, _)| c == count) {
                    return bad(&format!("no gap range for purchase count {count}"));
                }
            }
        }
        if let Some(recurring) = &self.recurring {
            if recurring.cycle_days <= 0.0 || recurring.n_consumables == 0 {
                return bad("recurring cycle needs a positive cycle and item count");
            }
            if recurring.cycle_days + recurring.jitter_days >= self.window_days as f64 {
                return bad("recurring cycle does not fit in the window");
            }
        }
        let (l1, l2, l3) = self.taxonomy_shape;
        if l1 == 0 || l2 == 0 || l3 == 0 || self.items_per_leaf == 0 {
            return bad("taxonomy must have at least one leaf and item");
        }
        if self.n_zips == 0 || self.n_merchants == 0 {
            return bad("need at least one zip and merchant");
        }
        Ok(())
    }

    pub fn window(&self) -> (i64, i64) {
        (
            self.window_start_ts,
            self.window_start_ts + i64::from(self.window_days) * SECONDS_PER_DAY,
        )
    }
}

struct Item {
    name: String,
    leaf: usize,
    price_cents: i64,
}

/// Everything one generation run produces, in datastore file formats.
pub struct SynthOutput {
    pub config: SynthConfig,
    pub events: Vec<EventRecord>,
    pub profiles: Vec<UserProfile>,
    pub taxonomy: CategoryTaxonomy,
    pub edges: Vec<(String, String, u64)>,
    pub zip_income: Vec<ZipIncomeRow>,
    pub zip_timezones: BTreeMap<String, i32>,
}

impl SynthOutput {
    /// Ingests the generated records with the standard filters and income
    /// join applied.
    pub fn dataset(&self) -> IngestOutcome {
        let mut profiles = self.profiles.clone();
        crate::datastore::join_income(&mut profiles.iter_mut(), &self.zip_income)
            .expect("generated income table has unique zips");
        ingest_and_filter(
            self.events.clone(),
            profiles,
            self.taxonomy.clone(),
            crate::datastore::DEFAULT_MAX_PURCHASES,
            Some(self.config.window()),
        )
    }

    pub fn graph(&self) -> EmailGraph {
        build_graph(&self.edges, crate::datastore::DEFAULT_MIN_MESSAGES)
    }

    /// Writes events.jsonl, profiles.csv, taxonomy.csv, edges.csv,
    /// zip_income.csv, zip_timezone.csv, and ground_truth.json.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir)?;
        crate::datastore::write_events_jsonl(&dir.join("events.jsonl"), &self.events)?;
        crate::datastore::write_profiles_csv(&dir.join("profiles.csv"), &self.profiles)?;
        crate::datastore::write_taxonomy_csv(&dir.join("taxonomy.csv"), &self.taxonomy)?;
        crate::datastore::write_edges_csv(&dir.join("edges.csv"), &self.edges)?;
        crate::datastore::write_zip_income_csv(&dir.join("zip_income.csv"), &self.zip_income)?;
        crate::datastore::write_zip_timezone_csv(
            &dir.join("zip_timezone.csv"),
            &self.zip_timezones,
        )?;
        std::fs::write(
            dir.join("ground_truth.json"),
            serde_json::to_string_pretty(&self.config)?,
        )?;
        Ok(())
    }
}

fn weighted_choice(rng: &mut StdRng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut draw = rng.random_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        if draw < w {
            return i;
        }
        draw -= w;
    }
    weights.len() - 1
}

/// Generates the full synthetic population deterministically from the seed.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    config.validate()?;
    let mut rng = StdRng::seed_from_u64(config.seed);
    let (l1, l2_per, l3_per) = config.taxonomy_shape;
    let n_leaves = l1 * l2_per * l3_per;

    // taxonomy and items
    let mut taxonomy = CategoryTaxonomy::new();
    let mut leaf_paths = Vec::with_capacity(n_leaves);
    for a in 0..l1 {
        for b in 0..l2_per {
            for c in 0..l3_per {
                leaf_paths.push(CategoryPath::leaf(
                    &format!("c1-{a:02}"),
                    &format!("c2-{a:02}-{b:02}"),
                    &format!("c3-{a:02}-{b:02}-{c:02}"),
                ));
            }
        }
    }
    let mut items = Vec::with_capacity(n_leaves * config.items_per_leaf);
    for leaf in 0..n_leaves {
        for k in 0..config.items_per_leaf {
            let idx = leaf * config.items_per_leaf + k;
            let name = format!("Item {idx:04}");
            // log-uniform base price between $1 and $200
            let ln_price = rng.random_range(100f64.ln()..20_000f64.ln());
            let price_cents = ln_price.exp().round() as i64;
            taxonomy.insert(&name, leaf_paths[leaf].clone())?;
            items.push(Item { name, leaf, price_cents });
        }
    }

    // zips: income gradient and a handful of US-like timezone offsets
    let mut zip_income = Vec::with_capacity(config.n_zips);
    let mut zip_timezones = BTreeMap::new();
    let mut zips = Vec::with_capacity(config.n_zips);
    for z in 0..config.n_zips {
        let zip = format!("{:05}", 10_000 + z * 37);
        let frac = if config.n_zips > 1 {
            z as f64 / (config.n_zips - 1) as f64
        } else {
            0.0
        };
        zip_income.push(ZipIncomeRow {
            zip: zip.clone(),
            median_income_usd: (30_000.0 + 90_000.0 * frac).round(),
        });
        zip_timezones.insert(zip.clone(), [-300, -360, -420, -480][z % 4]);
        zips.push((zip, frac));
    }

    // population
    let mut profiles = Vec::with_capacity(config.n_users);
    let mut communities = Vec::with_capacity(config.n_users);
    let mut income_frac = Vec::with_capacity(config.n_users);
    for u in 0..config.n_users {
        let user_id = format!("u{u:06}");
        let gender = if rng.random_range(0.0..1.0) < config.female_fraction {
            Gender::Female
        } else {
            Gender::Male
        };
        let age = rng.random_range(18..=79u32);
        let (zip, frac) = zips[rng.random_range(0..zips.len())].clone();
        profiles.push(UserProfile {
            user_id,
            gender,
            age: Some(age),
            zip: Some(zip),
            income_cents: None,
        });
        income_frac.push(frac);
        communities.push(if config.social.n_communities > 0 {
            rng.random_range(0..config.social.n_communities)
        } else {
            0
        });
    }

    // contact graph: same-community edges with retained message counts
    let mut edges = Vec::new();
    if config.social.mean_degree > 0 && config.n_users > 1 {
        let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (u, &c) in communities.iter().enumerate() {
            members.entry(c).or_default().push(u);
        }
        let mut seen: std::collections::BTreeSet<(usize, usize)> = std::collections::BTreeSet::new();
        for u in 0..config.n_users {
            let pool = &members[&communities[u]];
            if pool.len() < 2 {
                continue;
            }
            for _ in 0..config.social.mean_degree {
                let v = pool[rng.random_range(0..pool.len())];
                if v == u {
                    continue;
                }
                let key = (u.min(v), u.max(v));
                if seen.insert(key) {
                    edges.push((
                        format!("u{:06}", key.0),
                        format!("u{:06}", key.1),
                        rng.random_range(5..20u64),
                    ));
                }
            }
        }
    }

    // day weights over the window for iid layouts
    let window_dates: Vec<i64> = (0..config.window_days)
        .map(|d| config.window_start_ts + i64::from(d) * SECONDS_PER_DAY)
        .collect();
    let day_weights: Vec<f64> = window_dates
        .iter()
        .map(|&ts| {
            let weekday = DateTime::from_timestamp(ts, 0)
                .expect("in range")
                .weekday()
                .num_days_from_monday();
            // ramp from the Monday peak down to the Sunday trough
            let m = config.monday_multiplier;
            match weekday {
                0 => m,
                6 => 1.0,
                d => 1.0 + (m - 1.0) * (6.0 - d as f64) / 6.0,
            }
        })
        .collect();
    let hour_weights: Vec<f64> = (0..24)
        .map(|h| {
            let bump = (-((h as f64 - 12.0) * (h as f64 - 12.0)) / 18.0).exp();
            1.0 + config.diurnal_strength * bump
        })
        .collect();

    let day_cumulative: Vec<f64> = day_weights
        .iter()
        .scan(0.0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let day_weight_total = *day_cumulative.last().expect("window has days");

    let count_weights: Vec<f64> = config.purchase_counts.iter().map(|&(_, w)| w).collect();
    let price_class_ranges: [(i64, i64); 5] =
        [(100, 600), (600, 1200), (1200, 2000), (2000, 4000), (4000, 8000)];
    let (_, window_end) = config.window();

    let mut events = Vec::new();
    let mut order_seq = 0usize;
    for u in 0..config.n_users {
        let user_id = format!("u{u:06}");
        let mut count = config.purchase_counts[weighted_choice(&mut rng, &count_weights)].0;
        if config.income_spend_elasticity > 0.0 {
            let scale = 1.0 + config.income_spend_elasticity * income_frac[u];
            count = (count as f64 * scale).round() as usize;
        }
        let home_class = rng.random_range(0..5usize);

        // purchase instants
        let start_spread = i64::from(config.start_spread_days.max(1));
        let mut instants: Vec<i64> = Vec::with_capacity(count);
        match &config.delay_profile {
            DelayProfile::IidDays => {
                for _ in 0..count {
                    let draw = rng.random_range(0.0..day_weight_total);
                    let day = day_cumulative.partition_point(|&c| c <= draw);
                    let hour = weighted_choice(&mut rng, &hour_weights) as i64;
                    let second = rng.random_range(0..3600i64);
                    instants.push(window_dates[day] + hour * 3600 + second);
                }
                instants.sort();
            }
            DelayProfile::UniformGaps { .. } | DelayProfile::CountCoupledGaps { .. } => {
                let (min_days, max_days) = match &config.delay_profile {
                    DelayProfile::UniformGaps { min_days, max_days } => (*min_days, *max_days),
                    DelayProfile::CountCoupledGaps { ranges: pairs } => pairs
                        .iter()
                        .find(|&&(c, _, _)| c == count)
                        .map(|&(_, lo, hi)| (lo, hi))
                        .expect("validated"),
                    _ => unreachable!(),
                };
                let mut ts = config.window_start_ts
                    + rng.random_range(0..start_spread) * SECONDS_PER_DAY
                    + rng.random_range(28_800..64_800i64); // some daytime second
                for _ in 0..count {
                    instants.push(ts);
                    let gap = rng.random_range(min_days..=max_days);
                    ts += i64::from(gap) * SECONDS_PER_DAY;
                }
            }
            DelayProfile::WeeklyGaps { max_weeks } => {
                let mut ts = config.window_start_ts
                    + rng.random_range(0..start_spread) * SECONDS_PER_DAY
                    + rng.random_range(28_800..64_800i64);
                for _ in 0..count {
                    instants.push(ts);
                    let weeks = rng.random_range(1..=*max_weeks);
                    let extra = rng.random_range(0..43_200i64); // up to half a day
                    ts += i64::from(weeks) * 7 * SECONDS_PER_DAY + extra;
                }
            }
        }
        instants.retain(|&ts| ts < window_end);

        // leaf preference weights for item choice
        let n_items = items.len();
        let social = &config.social;
        let mut leaf_weights = vec![1.0f64; n_leaves];
        if social.community_strength > 0.0 && social.n_communities > 0 {
            // strided leaf picks span different subtrees, so shallow levels
            // blur community preferences while deep levels keep them sharp
            let block = (n_leaves / social.n_communities).max(1);
            for i in 0..block {
                let leaf = (communities[u] + i * social.n_communities) % n_leaves;
                leaf_weights[leaf] += social.community_strength * n_leaves as f64 / block as f64;
            }
        }
        if social.gender_strength > 0.0 {
            let (start, len) = match profiles[u].gender {
                Gender::Female => (0usize, social.female_block),
                _ => (social.female_block, social.male_block),
            };
            for i in 0..len.min(n_leaves) {
                leaf_weights[(start + i) % n_leaves] +=
                    social.gender_strength * n_leaves as f64 / len as f64;
            }
        }
        let uses_leaf_prefs =
            social.community_strength > 0.0 || social.gender_strength > 0.0;

        // item weights for inverse-price popularity
        let item_weights: Option<Vec<f64>> = (config.popularity_inverse_price > 0.0).then(|| {
            items
                .iter()
                .map(|it| (1.0 / it.price_cents as f64).powf(config.popularity_inverse_price))
                .collect()
        });

        // recurring consumable for this user
        let consumable: Option<usize> = config.recurring.as_ref().map(|r| {
            rng.random_range(0..r.n_consumables.min(n_items))
        });

        let mut prev_ts: Option<i64> = None;
        let mut order_id = String::new();
        if let (Some(recurring), Some(consumable_idx)) = (&config.recurring, consumable) {
            // cycle purchases of one consumable, plus one-off background items
            let mut t = config.window_start_ts
                + rng.random_range(0..7i64) * SECONDS_PER_DAY
                + rng.random_range(28_800..64_800i64);
            let window_end = config.window().1;
            while t < window_end {
                order_seq += 1;
                let item = &items[consumable_idx];
                events.push(event_record(
                    &user_id,
                    t,
                    item,
                    &leaf_paths[item.leaf],
                    item.price_cents,
                    format!("o{order_seq:07}"),
                    format!("merchant{:02}", order_seq % config.n_merchants + 1),
                ));
                let jitter = if recurring.jitter_days > 0.0 {
                    rng.random_range(-recurring.jitter_days..=recurring.jitter_days)
                } else {
                    0.0
                };
                t += ((recurring.cycle_days + jitter) * SECONDS_PER_DAY as f64) as i64;
            }
            for k in 0..2 {
                order_seq += 1;
                let item =
                    &items[recurring.n_consumables + (u * 2 + k) % (n_items - recurring.n_consumables)];
                let t = config.window_start_ts
                    + rng.random_range(0..i64::from(config.window_days)) * SECONDS_PER_DAY
                    + rng.random_range(28_800..64_800i64);
                events.push(event_record(
                    &user_id,
                    t,
                    item,
                    &leaf_paths[item.leaf],
                    item.price_cents,
                    format!("o{order_seq:07}"),
                    format!("merchant{:02}", order_seq % config.n_merchants + 1),
                ));
            }
            continue;
        }

        for (k, &ts) in instants.iter().enumerate() {
            // choose item
            let item = if let Some(weights) = &item_weights {
                &items[weighted_choice(&mut rng, weights)]
            } else if uses_leaf_prefs {
                let leaf = weighted_choice(&mut rng, &leaf_weights);
                let within = rng.random_range(0..config.items_per_leaf);
                &items[leaf * config.items_per_leaf + within]
            } else {
                &items[rng.random_range(0..n_items)]
            };

            // choose price
            let mut price = item.price_cents;
            if config.budget_depletion {
                let gap_days = match prev_ts {
                    Some(prev) => (ts - prev) as f64 / SECONDS_PER_DAY as f64,
                    None => rng.random_range(1.0..10.0),
                };
                let noise = 1.0 + rng.random_range(-config.price_noise..=config.price_noise);
                price = ((gap_days * 100.0 * noise).round() as i64).max(1);
            } else if config.class_repeat_prob > 0.0 {
                let class = if rng.random_range(0.0..1.0) < config.class_repeat_prob {
                    home_class
                } else {
                    rng.random_range(0..5usize)
                };
                let (lo, hi) = price_class_ranges[class];
                price = rng.random_range(lo..hi);
            } else if let Some((lo, hi)) = config.uniform_price_range {
                price = rng.random_range(lo..hi);
            }
            if config.income_spend_elasticity > 0.0 {
                let scale = 1.0 + 0.5 * config.income_spend_elasticity * income_frac[u];
                price = ((price as f64) * scale).round() as i64;
            }

            // order grouping: a purchase may join the previous order,
            // adopting its instant
            let join_previous = config.multi_item_order_prob > 0.0
                && k > 0
                && rng.random_range(0.0..1.0) < config.multi_item_order_prob;
            let ts = if join_previous { prev_ts.unwrap() } else { ts };
            if !join_previous {
                order_seq += 1;
                order_id = format!("o{order_seq:07}");
            }
            events.push(event_record(
                &user_id,
                ts,
                item,
                &leaf_paths[item.leaf],
                price,
                order_id.clone(),
                format!("merchant{:02}", order_seq % config.n_merchants + 1),
            ));
            prev_ts = Some(ts);
        }
    }

    Ok(SynthOutput {
        config: config.clone(),
        events,
        profiles,
        taxonomy,
        edges,
        zip_income,
        zip_timezones,
    })
}

fn event_record(
    user_id: &str,
    ts: i64,
    item: &Item,
    path: &CategoryPath,
    price_cents: i64,
    order_id: String,
    merchant_id: String,
) -> EventRecord {
    EventRecord {
        user_id: user_id.to_string(),
        ts,
        item_id: item.name.clone(),
        item_name: item.name.clone(),
        price_cents,
        order_id,
        merchant_id,
        cat1: path.l1.clone(),
        cat2: path.l2.clone().unwrap_or_default(),
        cat3: path.l3.clone().unwrap_or_default(),
    }
}

/// The five built-in merchant template shapes, one file body per merchant id.
pub fn merchant_template_text(merchant_id: &str, shape: usize) -> String {
    let sender = format!("orders@{merchant_id}.example");
    match shape % 5 {
        0 => format!(
            "merchant: {merchant_id}\nsender: {sender}\ndate: Order placed: {{DATE}}\norder: Order number: {{ORDER_ID}}\nitem: {{QTY}} x {{ITEM}} at {{PRICE}} each\n"
        ),
        1 => format!(
            "merchant: {merchant_id}\nsender: {sender}\ndate: Date: {{DATE}}\norder: Ref: {{ORDER_ID}}\nitem: - {{ITEM}} | qty {{QTY}} | {{PRICE}}\n"
        ),
        2 => format!(
            "merchant: {merchant_id}\nsender: {sender}\ndate: Placed on {{DATE}}\norder: Confirmation #{{ORDER_ID}}\nitem: Item: {{ITEM}} Price: {{PRICE}}\n"
        ),
        3 => format!(
            "merchant: {merchant_id}\nsender: {sender}\ndate: Ordered: {{DATE}}\norder: Order id: {{ORDER_ID}}\nitem: {{ITEM}} costs {{PRICE}}\n"
        ),
        _ => format!(
            "merchant: {merchant_id}\nsender: {sender}\ndate: When: {{DATE}}\norder: Number: {{ORDER_ID}}\nitem: [{{QTY}}] {{ITEM}} @ {{PRICE}}\n"
        ),
    }
}

/// Writes one template file per merchant that appears in the config.
pub fn write_templates(config: &SynthConfig, dir: &Path) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir)?;
    for m in 1..=config.n_merchants {
        let merchant_id = format!("merchant{m:02}");
        std::fs::write(
            dir.join(format!("{merchant_id}.tmpl")),
            merchant_template_text(&merchant_id, m - 1),
        )?;
    }
    Ok(())
}

/// One rendered receipt email.
#[derive(Debug, Clone)]
pub struct RenderedEmail {
    /// `<user_id>__<order_id>.txt`; the parse command recovers the user id
    /// from the prefix.
    pub file_name: String,
    pub user_id: String,
    pub order_id: String,
    pub text: String,
}

fn sender_for(template: &Template) -> Result<String, SynthError> {
    let pattern = &template.sender_pattern;
    if !pattern.contains('*') && !pattern.contains('?') {
        return Ok(pattern.clone());
    }
    let derived: String = pattern.chars().map(|c| if c == '*' || c == '?' { 'a' } else { c }).collect();
    if receipt::glob_match(pattern, &derived) {
        Ok(derived)
    } else {
        Err(SynthError::InfeasibleConfig(format!(
            "cannot derive a concrete sender from pattern {pattern:?}"
        )))
    }
}

/// Renders one email per order so that parsing recovers every event exactly.
/// Every merchant in the dataset must have a template.
pub fn render_receipts(
    dataset: &Dataset,
    templates: &TemplateSet,
) -> Result<Vec<RenderedEmail>, SynthError> {
    use crate::receipt::Slot;
    let mut emails = Vec::new();
    for (user_id, user_events) in dataset.iter_user_events() {
        // group events into orders, preserving chronological order
        let mut orders: Vec<(&str, Vec<&crate::datastore::PurchaseEvent>)> = Vec::new();
        for event in user_events {
            match orders.iter_mut().find(|(id, _)| *id == event.order_id) {
                Some((_, events)) => events.push(event),
                None => orders.push((&event.order_id, vec![event])),
            }
        }
        for (order_id, order_events) in orders {
            let merchant_id = &order_events[0].merchant_id;
            let template = templates
                .get(merchant_id)
                .ok_or_else(|| SynthError::MissingTemplate(merchant_id.clone()))?;
            let sender = sender_for(template)?;

            // collapse identical (item, price) rows into quantities
            let mut lines: Vec<(String, i64, u32)> = Vec::new();
            for event in &order_events {
                match lines
                    .iter_mut()
                    .find(|(name, price, _)| *name == event.item_name && *price == event.price_cents)
                {
                    Some((_, _, qty)) => *qty += 1,
                    None => lines.push((event.item_name.clone(), event.price_cents, 1)),
                }
            }

            let mut text = format!("From: {sender}\n\nThank you for your order!\n");
            let mut values = BTreeMap::new();
            values.insert(Slot::OrderId, order_id.to_string());
            text.push_str(&Template::render_line(template.order_pattern(), &values));
            text.push('\n');
            let mut values = BTreeMap::new();
            values.insert(Slot::Date, receipt::format_date(order_events[0].timestamp));
            text.push_str(&Template::render_line(template.date_pattern(), &values));
            text.push('\n');
            for (item_name, price_cents, qty) in &lines {
                if template.item_has_qty() {
                    let mut values = BTreeMap::new();
                    values.insert(Slot::Qty, qty.to_string());
                    values.insert(Slot::Item, item_name.clone());
                    values.insert(Slot::Price, receipt::format_price_cents(*price_cents));
                    text.push_str(&Template::render_line(template.item_pattern(), &values));
                    text.push('\n');
                } else {
                    // templates without a quantity slot repeat the line
                    for _ in 0..*qty {
                        let mut values = BTreeMap::new();
                        values.insert(Slot::Item, item_name.clone());
                        values.insert(Slot::Price, receipt::format_price_cents(*price_cents));
                        text.push_str(&Template::render_line(template.item_pattern(), &values));
                        text.push('\n');
                    }
                }
            }
            let total: i64 = order_events.iter().map(|e| e.price_cents).sum();
            text.push_str(&format!("Total {}\n", receipt::format_price_cents(total)));

            emails.push(RenderedEmail {
                file_name: format!("{user_id}__{order_id}.txt"),
                user_id: user_id.clone(),
                order_id: order_id.to_string(),
                text,
            });
        }
    }
    Ok(emails)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::receipt::{load_templates, parse_email};
    use tempfile::tempdir;

    #[test]
    fn same_seed_is_byte_identical() {
        let config = SynthConfig::null_model(50, 11);
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        generate(&config).unwrap().write_dir(dir_a.path()).unwrap();
        generate(&config).unwrap().write_dir(dir_b.path()).unwrap();
        for name in [
            "events.jsonl",
            "profiles.csv",
            "taxonomy.csv",
            "edges.csv",
            "zip_income.csv",
            "zip_timezone.csv",
            "ground_truth.json",
        ] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate(&SynthConfig::null_model(50, 1)).unwrap();
        let b = generate(&SynthConfig::null_model(50, 2)).unwrap();
        assert_ne!(a.events, b.events);
    }

    #[test]
    fn events_respect_window_and_counts() {
        let config = SynthConfig::budget(40, 5, 30, true, 3);
        let out = generate(&config).unwrap();
        let outcome = out.dataset();
        assert!(outcome.rejected.is_empty(), "{:?}", outcome.rejected.first().map(|r| &r.reason));
        let ds = outcome.dataset;
        assert_eq!(ds.shopper_count(), 40);
        for user in ds.users() {
            assert_eq!(ds.events_of(user).len(), 5);
        }
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let mut config = SynthConfig::null_model(10, 0);
        config.purchase_counts.clear();
        assert!(matches!(generate(&config), Err(SynthError::InfeasibleConfig(_))));

        let mut config = SynthConfig::null_model(10, 0);
        config.delay_profile = DelayProfile::CountCoupledGaps { ranges: vec![(3, 1, 5)] };
        assert!(matches!(generate(&config), Err(SynthError::InfeasibleConfig(_))));

        let mut config = SynthConfig::recurring(10, 30.0, 3.0, 0);
        config.window_days = 20;
        assert!(matches!(generate(&config), Err(SynthError::InfeasibleConfig(_))));
    }

    #[test]
    fn rendered_corpus_has_one_email_per_order() {
        let mut config = SynthConfig::null_model(20, 5);
        config.multi_item_order_prob = 0.3;
        let out = generate(&config).unwrap();
        let ds = out.dataset().dataset;
        let template_dir = tempdir().unwrap();
        write_templates(&config, template_dir.path()).unwrap();
        let templates = load_templates(template_dir.path()).unwrap();
        let emails = render_receipts(&ds, &templates).unwrap();
        let mut order_ids: std::collections::BTreeSet<&str> = Default::default();
        for event_user in ds.iter_events() {
            order_ids.insert(&event_user.order_id);
        }
        assert_eq!(emails.len(), order_ids.len());
    }

    #[test]
    fn two_item_order_round_trips_through_a_template() {
        let mut config = SynthConfig::null_model(10, 9);
        config.multi_item_order_prob = 0.5;
        let out = generate(&config).unwrap();
        let ds = out.dataset().dataset;
        let template_dir = tempdir().unwrap();
        write_templates(&config, template_dir.path()).unwrap();
        let templates = load_templates(template_dir.path()).unwrap();
        let emails = render_receipts(&ds, &templates).unwrap();
        for email in &emails {
            let order = parse_email(&email.text, &templates).unwrap();
            assert_eq!(order.order_id, email.order_id);
        }
    }

    #[test]
    fn unknown_merchant_fails_rendering() {
        let config = SynthConfig::null_model(5, 1);
        let out = generate(&config).unwrap();
        let ds = out.dataset().dataset;
        let templates = TemplateSet::new(); // empty
        assert!(matches!(
            render_receipts(&ds, &templates),
            Err(SynthError::MissingTemplate(_))
        ));
    }
}
