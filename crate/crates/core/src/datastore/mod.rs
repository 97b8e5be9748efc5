//! Purchase log, user profiles, taxonomy, and email graph, with the dataset
//! filters applied at ingestion time.

mod graph;
mod io;

pub use graph::{build_graph, EmailGraph};
pub use io::{
    dataset_to_records, load_dataset_dir, load_graph_dir, read_edges_csv, read_events_jsonl,
    read_profiles_csv, read_taxonomy_csv, read_zip_income_csv, read_zip_timezone_csv,
    write_edges_csv, write_events_jsonl, write_profiles_csv, write_taxonomy_csv,
    write_zip_income_csv, write_zip_timezone_csv, EventRecord, ZipIncomeRow,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const DEFAULT_MAX_PURCHASES: usize = 1000;
pub const DEFAULT_MIN_MESSAGES: u64 = 5;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}:{line}: {msg}")]
    BadRecord { path: String, line: usize, msg: String },
    #[error("duplicate zip {0} in income table")]
    DuplicateZip(String),
    #[error("duplicate item {0} in taxonomy")]
    DuplicateTaxonomyItem(String),
    #[error("income grouping requested but no profile has joined income")]
    IncomeNotJoined,
    #[error("{0}")]
    Invalid(String),
}

/// Three-level category path; deeper levels may be absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryPath {
    pub l1: String,
    pub l2: Option<String>,
    pub l3: Option<String>,
}

impl CategoryPath {
    pub fn leaf(l1: &str, l2: &str, l3: &str) -> Self {
        CategoryPath {
            l1: l1.to_string(),
            l2: Some(l2.to_string()),
            l3: Some(l3.to_string()),
        }
    }

    /// Label at a 1-based level, if present.
    pub fn label(&self, level: u8) -> Option<&str> {
        match level {
            1 => Some(&self.l1),
            2 => self.l2.as_deref(),
            3 => self.l3.as_deref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Unknown,
}

impl Gender {
    pub fn as_str(&self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Gender {
        match s {
            "female" | "f" => Gender::Female,
            "male" | "m" => Gender::Male,
            _ => Gender::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserProfile {
    pub user_id: String,
    pub gender: Gender,
    pub age: Option<u32>,
    pub zip: Option<String>,
    pub income_cents: Option<i64>,
}

impl UserProfile {
    pub fn unknown(user_id: &str) -> Self {
        UserProfile {
            user_id: user_id.to_string(),
            gender: Gender::Unknown,
            age: None,
            zip: None,
            income_cents: None,
        }
    }
}

/// One item bought by one user at one instant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PurchaseEvent {
    pub user_id: String,
    pub timestamp: i64,
    pub item_name: String,
    pub item_id: String,
    pub price_cents: i64,
    pub category: Option<CategoryPath>,
    pub order_id: String,
    pub merchant_id: String,
}

/// item_id -> depth-3 leaf mapping.
#[derive(Debug, Clone, Default)]
pub struct CategoryTaxonomy {
    leaves: BTreeMap<String, CategoryPath>,
}

impl CategoryTaxonomy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a full-depth leaf mapping; duplicate item ids are an error.
    pub fn insert(&mut self, item_id: &str, path: CategoryPath) -> Result<(), DataError> {
        if path.l2.is_none() || path.l3.is_none() {
            return Err(DataError::Invalid(format!(
                "taxonomy leaf for {item_id} is not depth 3"
            )));
        }
        if self
            .leaves
            .insert(item_id.to_string(), path)
            .is_some()
        {
            return Err(DataError::DuplicateTaxonomyItem(item_id.to_string()));
        }
        Ok(())
    }

    pub fn lookup(&self, item_id: &str) -> Option<&CategoryPath> {
        self.leaves.get(item_id)
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &CategoryPath)> {
        self.leaves.iter()
    }
}

/// What the bulk-account filter removed, plus the applied cap.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FilterProvenance {
    pub max_purchases: usize,
    pub removed_users: usize,
    pub removed_events: usize,
}

/// A record refused at ingestion, with the reason.
#[derive(Debug, Clone)]
pub struct RejectedRecord {
    pub record: EventRecord,
    pub reason: String,
}

/// Immutable purchase dataset: per-user event sequences sorted by time.
#[derive(Debug, Clone)]
pub struct Dataset {
    events_by_user: BTreeMap<String, Vec<PurchaseEvent>>,
    profiles: BTreeMap<String, UserProfile>,
    taxonomy: CategoryTaxonomy,
    window: (i64, i64),
    provenance: FilterProvenance,
}

impl Dataset {
    pub fn users(&self) -> impl Iterator<Item = &String> {
        self.events_by_user.keys()
    }

    pub fn events_of(&self, user_id: &str) -> &[PurchaseEvent] {
        self.events_by_user
            .get(user_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn iter_user_events(&self) -> impl Iterator<Item = (&String, &Vec<PurchaseEvent>)> {
        self.events_by_user.iter()
    }

    pub fn iter_events(&self) -> impl Iterator<Item = &PurchaseEvent> {
        self.events_by_user.values().flatten()
    }

    pub fn event_count(&self) -> usize {
        self.events_by_user.values().map(Vec::len).sum()
    }

    pub fn shopper_count(&self) -> usize {
        self.events_by_user.len()
    }

    pub fn profile(&self, user_id: &str) -> Option<&UserProfile> {
        self.profiles.get(user_id)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &UserProfile> {
        self.profiles.values()
    }

    pub fn profiles_mut(&mut self) -> impl Iterator<Item = &mut UserProfile> {
        self.profiles.values_mut()
    }

    pub fn taxonomy(&self) -> &CategoryTaxonomy {
        self.taxonomy_ref()
    }

    fn taxonomy_ref(&self) -> &CategoryTaxonomy {
        &self.taxonomy
    }

    /// Half-open dataset window `[start, end)` in epoch seconds.
    pub fn window(&self) -> (i64, i64) {
        self.window
    }

    pub fn provenance(&self) -> &FilterProvenance {
        &self.provenance
    }

    /// Total spend of one user over the window, in cents.
    pub fn total_spend_of(&self, user_id: &str) -> i64 {
        self.events_of(user_id).iter().map(|e| e.price_cents).sum()
    }
}

/// Outcome of ingestion: the filtered dataset plus every refused record.
#[derive(Debug)]
pub struct IngestOutcome {
    pub dataset: Dataset,
    pub rejected: Vec<RejectedRecord>,
}

/// Builds the dataset from raw event records: validates each record, resolves
/// categories through the taxonomy, sorts per-user sequences by time, and
/// removes users whose purchase count exceeds `max_purchases`.
///
/// `window` restricts timestamps to `[start, end)`; when absent it is derived
/// from the accepted events.
pub fn ingest_and_filter(
    records: Vec<EventRecord>,
    profiles: Vec<UserProfile>,
    taxonomy: CategoryTaxonomy,
    max_purchases: usize,
    window: Option<(i64, i64)>,
) -> IngestOutcome {
    let mut rejected = Vec::new();
    let mut events_by_user: BTreeMap<String, Vec<PurchaseEvent>> = BTreeMap::new();

    for record in records {
        if record.price_cents < 0 {
            rejected.push(RejectedRecord {
                reason: format!("negative price {}", record.price_cents),
                record,
            });
            continue;
        }
        if let Some((start, end)) = window {
            if record.ts < start || record.ts >= end {
                rejected.push(RejectedRecord {
                    reason: format!("timestamp {} outside window", record.ts),
                    record,
                });
                continue;
            }
        }
        let category = record.category_path().or_else(|| {
            taxonomy.lookup(&record.item_id).cloned()
        });
        let event = PurchaseEvent {
            user_id: record.user_id.clone(),
            timestamp: record.ts,
            item_name: record.item_name.clone(),
            item_id: record.item_id.clone(),
            price_cents: record.price_cents,
            category,
            order_id: record.order_id.clone(),
            merchant_id: record.merchant_id.clone(),
        };
        events_by_user.entry(record.user_id.clone()).or_default().push(event);
    }

    let mut removed_users = 0;
    let mut removed_events = 0;
    events_by_user.retain(|_, events| {
        if events.len() > max_purchases {
            removed_users += 1;
            removed_events += events.len();
            false
        } else {
            true
        }
    });

    for events in events_by_user.values_mut() {
        events.sort_by_key(|e| e.timestamp);
    }

    let window = window.unwrap_or_else(|| {
        let mut min = i64::MAX;
        let mut max = i64::MIN;
        for events in events_by_user.values() {
            for e in events {
                min = min.min(e.timestamp);
                max = max.max(e.timestamp);
            }
        }
        if min > max {
            (0, 0)
        } else {
            (min, max + 1)
        }
    });

    let profiles = profiles
        .into_iter()
        .map(|p| (p.user_id.clone(), p))
        .collect();

    IngestOutcome {
        dataset: Dataset {
            events_by_user,
            profiles,
            taxonomy,
            window,
            provenance: FilterProvenance {
                max_purchases,
                removed_users,
                removed_events,
            },
        },
        rejected,
    }
}

/// Joins median income onto profiles by zip. Duplicate zip rows are an error.
/// Returns how many profiles gained an income value.
pub fn join_income(
    profiles: &mut dyn Iterator<Item = &mut UserProfile>,
    table: &[ZipIncomeRow],
) -> Result<usize, DataError> {
    let mut by_zip: BTreeMap<&str, i64> = BTreeMap::new();
    for row in table {
        let income_cents = (row.median_income_usd * 100.0).round() as i64;
        if by_zip.insert(&row.zip, income_cents).is_some() {
            return Err(DataError::DuplicateZip(row.zip.clone()));
        }
    }
    let mut joined = 0;
    for profile in profiles {
        if let Some(zip) = &profile.zip {
            if let Some(&income) = by_zip.get(zip.as_str()) {
                profile.income_cents = Some(income);
                joined += 1;
            }
        }
    }
    Ok(joined)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(user: &str, ts: i64, price: i64) -> EventRecord {
        EventRecord {
            user_id: user.to_string(),
            ts,
            item_id: format!("item-{ts}"),
            item_name: format!("Item {ts}"),
            price_cents: price,
            order_id: format!("o-{user}-{ts}"),
            merchant_id: "m1".to_string(),
            cat1: String::new(),
            cat2: String::new(),
            cat3: String::new(),
        }
    }

    #[test]
    fn empty_event_list_gives_empty_dataset() {
        let out = ingest_and_filter(vec![], vec![], CategoryTaxonomy::new(), 1000, None);
        assert_eq!(out.dataset.event_count(), 0);
        assert_eq!(out.dataset.provenance().removed_users, 0);
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn bulk_account_cap_is_strictly_more_than() {
        let mut records = Vec::new();
        for i in 0..1001 {
            records.push(record("bulk", 1000 + i, 100));
        }
        for i in 0..1000 {
            records.push(record("kept", 1000 + i, 100));
        }
        let out = ingest_and_filter(records, vec![], CategoryTaxonomy::new(), 1000, None);
        assert!(out.dataset.events_of("bulk").is_empty());
        assert_eq!(out.dataset.events_of("kept").len(), 1000);
        assert_eq!(out.dataset.provenance().removed_users, 1);
        assert_eq!(out.dataset.provenance().removed_events, 1001);
    }

    #[test]
    fn negative_price_and_out_of_window_are_rejected() {
        let records = vec![record("u", 10, -5), record("u", 999, 100), record("u", 50, 100)];
        let out = ingest_and_filter(records, vec![], CategoryTaxonomy::new(), 1000, Some((0, 100)));
        assert_eq!(out.rejected.len(), 2);
        assert_eq!(out.dataset.events_of("u").len(), 1);
        assert!(out.rejected[0].reason.contains("negative price"));
        assert!(out.rejected[1].reason.contains("outside window"));
    }

    #[test]
    fn events_are_sorted_per_user() {
        let records = vec![record("u", 30, 1), record("u", 10, 2), record("u", 20, 3)];
        let out = ingest_and_filter(records, vec![], CategoryTaxonomy::new(), 1000, None);
        let ts: Vec<i64> = out.dataset.events_of("u").iter().map(|e| e.timestamp).collect();
        assert_eq!(ts, vec![10, 20, 30]);
        assert_eq!(out.dataset.window(), (10, 31));
    }

    #[test]
    fn taxonomy_fills_missing_categories() {
        let mut taxonomy = CategoryTaxonomy::new();
        taxonomy
            .insert("item-10", CategoryPath::leaf("Electronics", "Audio", "Headphones"))
            .unwrap();
        let out = ingest_and_filter(
            vec![record("u", 10, 100)],
            vec![],
            taxonomy,
            1000,
            None,
        );
        let cat = out.dataset.events_of("u")[0].category.as_ref().unwrap();
        assert_eq!(cat.l1, "Electronics");
        assert_eq!(cat.label(3), Some("Headphones"));
    }

    #[test]
    fn join_income_maps_dollars_to_cents_and_rejects_duplicates() {
        let mut profiles = vec![
            UserProfile {
                user_id: "a".into(),
                gender: Gender::Female,
                age: Some(30),
                zip: Some("90292".into()),
                income_cents: None,
            },
            UserProfile::unknown("b"),
        ];
        let table = vec![ZipIncomeRow { zip: "90292".into(), median_income_usd: 75000.0 }];
        let joined = join_income(&mut profiles.iter_mut(), &table).unwrap();
        assert_eq!(joined, 1);
        assert_eq!(profiles[0].income_cents, Some(7_500_000));
        assert_eq!(profiles[1].income_cents, None);

        let dup = vec![
            ZipIncomeRow { zip: "11111".into(), median_income_usd: 1.0 },
            ZipIncomeRow { zip: "11111".into(), median_income_usd: 2.0 },
        ];
        assert!(matches!(
            join_income(&mut profiles.iter_mut(), &dup),
            Err(DataError::DuplicateZip(_))
        ));
    }

    #[test]
    fn filtering_removes_whole_users_never_individual_events() {
        let mut records = Vec::new();
        for user in ["a", "b", "c"] {
            for i in 0..7 {
                records.push(record(user, 100 + i, 50 * (i + 1)));
            }
        }
        for i in 0..20 {
            records.push(record("bulk", 100 + i, 10));
        }
        let out = ingest_and_filter(records, vec![], CategoryTaxonomy::new(), 10, None);
        assert!(out.dataset.events_of("bulk").is_empty());
        for user in ["a", "b", "c"] {
            assert_eq!(out.dataset.events_of(user).len(), 7, "retained user lost events");
        }
    }

    #[test]
    fn taxonomy_rejects_duplicates_and_shallow_leaves() {
        let mut taxonomy = CategoryTaxonomy::new();
        taxonomy.insert("x", CategoryPath::leaf("A", "B", "C")).unwrap();
        assert!(taxonomy.insert("x", CategoryPath::leaf("A", "B", "D")).is_err());
        let shallow = CategoryPath { l1: "A".into(), l2: None, l3: None };
        assert!(taxonomy.insert("y", shallow).is_err());
    }
}
