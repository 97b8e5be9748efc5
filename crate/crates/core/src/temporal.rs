//! Temporal structure of the purchase log: weekly and diurnal cycles, the
//! month-boundary comparison, recurring purchases, inter-purchase delays, and
//! the budget-depletion curve with its shuffle test.

use crate::datastore::{DataError, Dataset};
use crate::stats;
use chrono::{DateTime, Datelike, NaiveDate, Timelike, Weekday};
use rand::seq::SliceRandom;
use rand::rngs::StdRng;
use rand::SeedableRng;
use std::collections::BTreeMap;

const SECONDS_PER_DAY: f64 = 86_400.0;

/// zip -> UTC offset in minutes. Users without a known zip fall back to UTC.
#[derive(Debug, Clone, Default)]
pub struct TimezoneTable {
    offsets: BTreeMap<String, i32>,
}

impl TimezoneTable {
    pub fn new(offsets: BTreeMap<String, i32>) -> Self {
        TimezoneTable { offsets }
    }

    fn offset_minutes(&self, dataset: &Dataset, user_id: &str) -> i32 {
        dataset
            .profile(user_id)
            .and_then(|p| p.zip.as_ref())
            .and_then(|zip| self.offsets.get(zip))
            .copied()
            .unwrap_or(0)
    }
}

fn local_datetime(ts: i64, offset_minutes: i32) -> DateTime<chrono::Utc> {
    DateTime::from_timestamp(ts + i64::from(offset_minutes) * 60, 0)
        .expect("timestamp in range")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    DayOfWeek,
    HourOfDay,
}

#[derive(Debug, Clone)]
pub struct ActivityProfile {
    pub granularity: Granularity,
    /// 7 slots (Monday first) or 24 slots (hour 0 first).
    pub slot_counts: Vec<u64>,
    /// Mean per-Monday count over mean per-Sunday count; None when undefined.
    pub monday_sunday_ratio: Option<f64>,
}

/// Purchase counts per day of week or hour of day, in each user's local time.
pub fn activity_profile(
    dataset: &Dataset,
    granularity: Granularity,
    tz: Option<&TimezoneTable>,
) -> ActivityProfile {
    let n_slots = match granularity {
        Granularity::DayOfWeek => 7,
        Granularity::HourOfDay => 24,
    };
    let mut slot_counts = vec![0u64; n_slots];
    for (user, events) in dataset.iter_user_events() {
        let offset = tz.map(|t| t.offset_minutes(dataset, user)).unwrap_or(0);
        for event in events {
            let local = local_datetime(event.timestamp, offset);
            let slot = match granularity {
                Granularity::DayOfWeek => local.weekday().num_days_from_monday() as usize,
                Granularity::HourOfDay => local.hour() as usize,
            };
            slot_counts[slot] += 1;
        }
    }

    let monday_sunday_ratio = match granularity {
        Granularity::HourOfDay => None,
        Granularity::DayOfWeek => {
            let (start, end) = dataset.window();
            let mondays = weekday_dates_in_window(start, end, Weekday::Mon);
            let sundays = weekday_dates_in_window(start, end, Weekday::Sun);
            if mondays == 0 || sundays == 0 || slot_counts[6] == 0 {
                None
            } else {
                let monday_mean = slot_counts[0] as f64 / mondays as f64;
                let sunday_mean = slot_counts[6] as f64 / sundays as f64;
                Some(monday_mean / sunday_mean)
            }
        }
    };

    ActivityProfile {
        granularity,
        slot_counts,
        monday_sunday_ratio,
    }
}

/// Number of calendar dates with the given weekday that start inside
/// `[start, end)` (UTC).
fn weekday_dates_in_window(start: i64, end: i64, weekday: Weekday) -> u64 {
    if end <= start {
        return 0;
    }
    let mut count = 0;
    let mut date = DateTime::from_timestamp(start, 0).expect("in range").date_naive();
    // the first date counts only if its midnight is not before the window start
    if date.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp() < start {
        date = date.succ_opt().expect("in range");
    }
    while date.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp() < end {
        if date.weekday() == weekday {
            count += 1;
        }
        date = date.succ_opt().expect("in range");
    }
    count
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonthBoundaryRow {
    /// "YYYY-MM"
    pub month: String,
    pub first_monday_count: u64,
    pub last_monday_count: u64,
    pub count_ratio: Option<f64>,
    pub first_monday_spend_cents: i64,
    pub last_monday_spend_cents: i64,
    pub spend_ratio: Option<f64>,
}

/// Compares first-Monday and last-Monday activity for every calendar month
/// fully inside the dataset window. Both purchase counts and spend are
/// reported; ratios are first over last.
pub fn month_boundary_test(dataset: &Dataset, tz: Option<&TimezoneTable>) -> Vec<MonthBoundaryRow> {
    let mut per_date: BTreeMap<NaiveDate, (u64, i64)> = BTreeMap::new();
    for (user, events) in dataset.iter_user_events() {
        let offset = tz.map(|t| t.offset_minutes(dataset, user)).unwrap_or(0);
        for event in events {
            let date = local_datetime(event.timestamp, offset).date_naive();
            let entry = per_date.entry(date).or_insert((0, 0));
            entry.0 += 1;
            entry.1 += event.price_cents;
        }
    }

    let (start, end) = dataset.window();
    if end <= start {
        return Vec::new();
    }
    let start_date = DateTime::from_timestamp(start, 0).expect("in range").date_naive();
    let end_date = DateTime::from_timestamp(end, 0).expect("in range").date_naive();

    let mut rows = Vec::new();
    let mut month_start = if start_date.day() == 1 {
        start_date
    } else {
        next_month_start(start_date)
    };
    loop {
        let next_start = next_month_start(month_start);
        if next_start > end_date {
            break;
        }
        let first_monday = (0..7)
            .map(|d| month_start + chrono::Days::new(d))
            .find(|d| d.weekday() == Weekday::Mon)
            .unwrap();
        let month_end = next_start.pred_opt().unwrap();
        let last_monday = (0..7)
            .map(|d| month_end - chrono::Days::new(d))
            .find(|d| d.weekday() == Weekday::Mon)
            .unwrap();
        let (first_count, first_spend) = per_date.get(&first_monday).copied().unwrap_or((0, 0));
        let (last_count, last_spend) = per_date.get(&last_monday).copied().unwrap_or((0, 0));
        rows.push(MonthBoundaryRow {
            month: format!("{:04}-{:02}", month_start.year(), month_start.month()),
            first_monday_count: first_count,
            last_monday_count: last_count,
            count_ratio: (last_count > 0).then(|| first_count as f64 / last_count as f64),
            first_monday_spend_cents: first_spend,
            last_monday_spend_cents: last_spend,
            spend_ratio: (last_spend > 0).then(|| first_spend as f64 / last_spend as f64),
        });
        month_start = next_start;
    }
    rows
}

fn next_month_start(date: NaiveDate) -> NaiveDate {
    let (year, month) = if date.month() == 12 {
        (date.year() + 1, 1)
    } else {
        (date.year(), date.month() + 1)
    };
    NaiveDate::from_ymd_opt(year, month, 1).expect("valid month start")
}

/// An item repeatedly bought by the same users, with its typical cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurringItem {
    pub item_id: String,
    pub item_name: String,
    /// Purchases aggregated over users who bought the item at least twice.
    pub repurchase_count: u64,
    pub median_delay_days: f64,
}

/// Items bought at two or more distinct instants by the same user, ranked by
/// aggregate repurchase count. The median delay pools consecutive same-user
/// gaps across all qualifying users.
pub fn recurring_items(dataset: &Dataset, top_k: usize) -> Vec<RecurringItem> {
    let mut per_item: BTreeMap<&str, (&str, u64, Vec<f64>)> = BTreeMap::new();
    for (_, events) in dataset.iter_user_events() {
        let mut per_user_item: BTreeMap<&str, (&str, Vec<i64>)> = BTreeMap::new();
        for event in events {
            let entry = per_user_item
                .entry(&event.item_id)
                .or_insert((&event.item_name, Vec::new()));
            // events are time sorted; keep distinct purchase instants
            if entry.1.last() != Some(&event.timestamp) {
                entry.1.push(event.timestamp);
            }
        }
        for (item_id, (item_name, instants)) in per_user_item {
            if instants.len() < 2 {
                continue;
            }
            let entry = per_item.entry(item_id).or_insert((item_name, 0, Vec::new()));
            entry.1 += instants.len() as u64;
            for pair in instants.windows(2) {
                entry.2.push((pair[1] - pair[0]) as f64 / SECONDS_PER_DAY);
            }
        }
    }

    let mut items: Vec<RecurringItem> = per_item
        .into_iter()
        .map(|(item_id, (item_name, count, gaps))| RecurringItem {
            item_id: item_id.to_string(),
            item_name: item_name.to_string(),
            repurchase_count: count,
            median_delay_days: stats::median(&gaps).unwrap_or(0.0),
        })
        .collect();
    items.sort_by(|a, b| {
        b.repurchase_count
            .cmp(&a.repurchase_count)
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    items.truncate(top_k);
    items
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayBin {
    pub day: u32,
    pub count: u64,
    pub pdf: f64,
}

#[derive(Debug, Clone)]
pub struct DelayDistribution {
    pub bins: Vec<DelayBin>,
    pub total: u64,
}

/// PDF of inter-purchase delays over one-day bins. Delays are the fractional
/// gaps between a user's consecutive purchases; users with a single purchase
/// contribute nothing.
pub fn delay_distribution(dataset: &Dataset) -> DelayDistribution {
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    let mut total = 0u64;
    for (_, events) in dataset.iter_user_events() {
        for pair in events.windows(2) {
            let days = (pair[1].timestamp - pair[0].timestamp) as f64 / SECONDS_PER_DAY;
            *counts.entry(days.floor() as u32).or_insert(0) += 1;
            total += 1;
        }
    }
    DelayDistribution {
        bins: counts
            .into_iter()
            .map(|(day, count)| DelayBin {
                day,
                count,
                pdf: count as f64 / total as f64,
            })
            .collect(),
        total,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetPoint {
    pub delay_days: u32,
    pub mean_normalized_price: f64,
    /// 95% confidence half-width; zero when fewer than two samples.
    pub ci95: f64,
    pub n: u64,
}

#[derive(Debug, Clone)]
pub struct BudgetCurve {
    pub points: Vec<BudgetPoint>,
    /// Spearman correlation over the contributing (delay, normalized price)
    /// event pairs.
    pub event_spearman: f64,
    pub n_users: usize,
}

/// Mean normalized price (price over the user's total window spend) as a
/// function of whole days since the user's previous purchase, restricted to
/// users whose purchase count lies in `cohort` (inclusive). With `shuffle`,
/// each user's price multiset is permuted across that user's events first.
pub fn budget_curve(
    dataset: &Dataset,
    cohort: (usize, usize),
    shuffle: Option<u64>,
) -> Result<BudgetCurve, DataError> {
    let (lo, hi) = cohort;
    let mut rng = shuffle.map(StdRng::seed_from_u64);
    let mut per_day: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    let mut n_users = 0usize;

    for (user, events) in dataset.iter_user_events() {
        if events.len() < lo || events.len() > hi {
            continue;
        }
        n_users += 1;
        let total: i64 = events.iter().map(|e| e.price_cents).sum();
        if total <= 0 {
            return Err(DataError::Invalid(format!(
                "cohort user {user} has no positive spend over the window"
            )));
        }
        let mut prices: Vec<i64> = events.iter().map(|e| e.price_cents).collect();
        if let Some(rng) = rng.as_mut() {
            prices.shuffle(rng);
        }
        for i in 1..events.len() {
            let delay =
                (events[i].timestamp - events[i - 1].timestamp) as f64 / SECONDS_PER_DAY;
            let day = delay.floor() as u32;
            let normalized = prices[i] as f64 / total as f64;
            per_day.entry(day).or_default().push(normalized);
            pairs.push((day as f64, normalized));
        }
    }

    if n_users == 0 {
        return Err(DataError::Invalid(format!(
            "no users with purchase count in [{lo}, {hi}]"
        )));
    }

    let points = per_day
        .into_iter()
        .map(|(delay_days, values)| {
            let mean = stats::mean(&values).unwrap();
            let ci95 = stats::std_samp(&values)
                .map(|s| 1.96 * s / (values.len() as f64).sqrt())
                .unwrap_or(0.0);
            BudgetPoint {
                delay_days,
                mean_normalized_price: mean,
                ci95,
                n: values.len() as u64,
            }
        })
        .collect();

    let delays: Vec<f64> = pairs.iter().map(|&(d, _)| d).collect();
    let prices: Vec<f64> = pairs.iter().map(|&(_, p)| p).collect();
    Ok(BudgetCurve {
        points,
        event_spearman: stats::spearman(&delays, &prices),
        n_users,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::{ingest_and_filter, CategoryTaxonomy, EventRecord};

    fn event_at(user: &str, ts: i64, item: &str, price: i64) -> EventRecord {
        EventRecord {
            user_id: user.to_string(),
            ts,
            item_id: item.to_string(),
            item_name: item.to_string(),
            price_cents: price,
            order_id: format!("o-{user}-{ts}"),
            merchant_id: "m".to_string(),
            cat1: String::new(),
            cat2: String::new(),
            cat3: String::new(),
        }
    }

    fn dataset(records: Vec<EventRecord>, window: Option<(i64, i64)>) -> Dataset {
        ingest_and_filter(records, vec![], CategoryTaxonomy::new(), 1000, window).dataset
    }

    fn ts(date: &str, hour: u32) -> i64 {
        NaiveDate::parse_from_str(date, "%Y-%m-%d")
            .unwrap()
            .and_hms_opt(hour, 0, 0)
            .unwrap()
            .and_utc()
            .timestamp()
    }

    #[test]
    fn weekday_ratio_over_single_week() {
        // 2014-02-03 is a Monday, 2014-02-09 a Sunday
        let records = vec![
            event_at("a", ts("2014-02-03", 9), "x", 100),
            event_at("b", ts("2014-02-03", 10), "x", 100),
            event_at("c", ts("2014-02-03", 11), "x", 100),
            event_at("d", ts("2014-02-09", 12), "x", 100),
        ];
        let window = (ts("2014-02-03", 0), ts("2014-02-10", 0));
        let ds = dataset(records, Some(window));
        let profile = activity_profile(&ds, Granularity::DayOfWeek, None);
        assert_eq!(profile.slot_counts.iter().sum::<u64>(), 4);
        assert_eq!(profile.slot_counts[0], 3);
        assert_eq!(profile.slot_counts[6], 1);
        assert!((profile.monday_sunday_ratio.unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_week_has_unit_ratio() {
        let mut records = Vec::new();
        for d in 0..7 {
            records.push(event_at("u", ts("2014-02-03", 0) + d * 86_400 + 3600, "x", 100));
        }
        let window = (ts("2014-02-03", 0), ts("2014-02-10", 0));
        let ds = dataset(records, Some(window));
        let profile = activity_profile(&ds, Granularity::DayOfWeek, None);
        assert!((profile.monday_sunday_ratio.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hour_profile_respects_timezone_offsets() {
        let mut offsets = BTreeMap::new();
        offsets.insert("90210".to_string(), -480); // UTC-8
        let tz = TimezoneTable::new(offsets);
        let mut records = vec![event_at("a", ts("2014-02-03", 10), "x", 100)];
        records[0].user_id = "a".to_string();
        let profiles = vec![crate::datastore::UserProfile {
            user_id: "a".to_string(),
            gender: crate::datastore::Gender::Unknown,
            age: None,
            zip: Some("90210".to_string()),
            income_cents: None,
        }];
        let ds = ingest_and_filter(records, profiles, CategoryTaxonomy::new(), 1000, None).dataset;
        let profile = activity_profile(&ds, Granularity::HourOfDay, Some(&tz));
        assert_eq!(profile.slot_counts[2], 1); // 10:00 UTC is 02:00 local
        assert_eq!(profile.slot_counts.iter().sum::<u64>(), 1);
    }

    #[test]
    fn month_boundary_equal_spend_gives_unit_ratio() {
        // March 2014: first Monday 03-03, last Monday 03-31
        let records = vec![
            event_at("a", ts("2014-03-03", 10), "x", 100),
            event_at("b", ts("2014-03-31", 10), "x", 100),
        ];
        let window = (ts("2014-03-01", 0), ts("2014-04-01", 0));
        let ds = dataset(records, Some(window));
        let rows = month_boundary_test(&ds, None);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].month, "2014-03");
        assert_eq!(rows[0].spend_ratio, Some(1.0));
        assert_eq!(rows[0].count_ratio, Some(1.0));
    }

    #[test]
    fn short_window_has_no_full_month() {
        let records = vec![event_at("a", ts("2014-03-05", 10), "x", 100)];
        let window = (ts("2014-03-02", 0), ts("2014-03-20", 0));
        let ds = dataset(records, Some(window));
        assert!(month_boundary_test(&ds, None).is_empty());
    }

    #[test]
    fn recurring_median_from_hand_gaps() {
        let day = 86_400;
        let records = vec![
            event_at("u", day, "soap", 100),
            event_at("u", day + 30 * day, "soap", 100),
            event_at("u", day + 72 * day, "soap", 100),
        ];
        let ds = dataset(records, None);
        let items = recurring_items(&ds, 10);
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].repurchase_count, 3);
        assert!((items[0].median_delay_days - 36.0).abs() < 1e-9);
    }

    #[test]
    fn single_purchases_never_recur() {
        let records = vec![
            event_at("u1", 86_400, "a", 100),
            event_at("u1", 2 * 86_400, "b", 100),
            event_at("u2", 3 * 86_400, "a", 100),
        ];
        let ds = dataset(records, None);
        assert!(recurring_items(&ds, 10).is_empty());
    }

    #[test]
    fn delay_pdf_concentrates_on_forced_gap() {
        let day = 86_400;
        let records = vec![
            event_at("u", 0, "a", 100),
            event_at("u", day, "b", 100),
            event_at("u", 2 * day, "c", 100),
        ];
        let ds = dataset(records, None);
        let dist = delay_distribution(&ds);
        assert_eq!(dist.bins.len(), 1);
        assert_eq!(dist.bins[0].day, 1);
        assert!((dist.bins[0].pdf - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_delay_distribution_when_no_repeat_buyers() {
        let ds = dataset(vec![event_at("u", 0, "a", 100)], None);
        let dist = delay_distribution(&ds);
        assert!(dist.bins.is_empty());
        assert_eq!(dist.total, 0);
    }

    #[test]
    fn budget_curve_hand_example() {
        let day = 86_400;
        let records = vec![
            event_at("u", 0, "start", 0),
            event_at("u", day, "small", 100),
            event_at("u", 11 * day, "large", 900),
        ];
        let ds = dataset(records, None);
        let curve = budget_curve(&ds, (1, usize::MAX), None).unwrap();
        assert_eq!(curve.points.len(), 2);
        assert_eq!(curve.points[0].delay_days, 1);
        assert!((curve.points[0].mean_normalized_price - 0.1).abs() < 1e-12);
        assert_eq!(curve.points[1].delay_days, 10);
        assert!((curve.points[1].mean_normalized_price - 0.9).abs() < 1e-12);
    }

    #[test]
    fn empty_cohort_is_an_error() {
        let ds = dataset(vec![event_at("u", 0, "a", 100)], None);
        assert!(budget_curve(&ds, (5, 5), None).is_err());
    }

    #[test]
    fn shuffle_is_seed_stable_and_preserves_the_price_multiset() {
        let day = 86_400;
        // one user, distinct delays, so each curve point is one event
        let prices = [100i64, 200, 300, 400];
        let records: Vec<EventRecord> = prices
            .iter()
            .enumerate()
            .map(|(i, &p)| event_at("u", (i as i64) * (i as i64 + 1) * day, &format!("i{i}"), p))
            .collect();
        let total: i64 = prices.iter().sum();
        let ds = dataset(records, None);

        let shuffled_a = budget_curve(&ds, (1, usize::MAX), Some(7)).unwrap();
        let shuffled_b = budget_curve(&ds, (1, usize::MAX), Some(7)).unwrap();
        assert_eq!(shuffled_a.points, shuffled_b.points);
        assert_eq!(shuffled_a.event_spearman, shuffled_b.event_spearman);

        // the curve holds all of the user's normalized prices except the one
        // permuted into first position: the user's mean over all events is
        // unchanged by the shuffle
        let curve_sum: f64 = shuffled_a
            .points
            .iter()
            .map(|p| p.mean_normalized_price * p.n as f64)
            .sum();
        let excluded = 1.0 - curve_sum;
        assert!(prices
            .iter()
            .any(|&p| (excluded - p as f64 / total as f64).abs() < 1e-12));
    }
}
