//! Readers and writers for the on-disk dataset formats: events.jsonl,
//! profiles.csv, taxonomy.csv, edges.csv, zip_income.csv, zip_timezone.csv.

use super::{
    CategoryPath, CategoryTaxonomy, DataError, Dataset, Gender, IngestOutcome, PurchaseEvent,
    UserProfile,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// One line of events.jsonl. Empty cat fields mean the level is unknown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub user_id: String,
    pub ts: i64,
    pub item_id: String,
    pub item_name: String,
    pub price_cents: i64,
    pub order_id: String,
    pub merchant_id: String,
    #[serde(default)]
    pub cat1: String,
    #[serde(default)]
    pub cat2: String,
    #[serde(default)]
    pub cat3: String,
}

impl EventRecord {
    pub fn category_path(&self) -> Option<CategoryPath> {
        if self.cat1.is_empty() {
            return None;
        }
        Some(CategoryPath {
            l1: self.cat1.clone(),
            l2: (!self.cat2.is_empty()).then(|| self.cat2.clone()),
            l3: (!self.cat3.is_empty()).then(|| self.cat3.clone()),
        })
    }

    pub fn from_event(event: &PurchaseEvent) -> Self {
        let (cat1, cat2, cat3) = match &event.category {
            Some(path) => (
                path.l1.clone(),
                path.l2.clone().unwrap_or_default(),
                path.l3.clone().unwrap_or_default(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        EventRecord {
            user_id: event.user_id.clone(),
            ts: event.timestamp,
            item_id: event.item_id.clone(),
            item_name: event.item_name.clone(),
            price_cents: event.price_cents,
            order_id: event.order_id.clone(),
            merchant_id: event.merchant_id.clone(),
            cat1,
            cat2,
            cat3,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct ZipIncomeRow {
    pub zip: String,
    pub median_income_usd: f64,
}

pub fn read_events_jsonl(path: &Path) -> Result<Vec<EventRecord>, DataError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord =
            serde_json::from_str(&line).map_err(|e| DataError::BadRecord {
                path: path.display().to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_events_jsonl(path: &Path, records: &[EventRecord]) -> Result<(), DataError> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(|e| DataError::Invalid(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_profiles_csv(path: &Path) -> Result<Vec<UserProfile>, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut profiles = Vec::new();
    for (i, row) in reader.deserialize::<ProfileRow>().enumerate() {
        let row = row?;
        profiles.push(row.into_profile(path, i + 2)?);
    }
    Ok(profiles)
}

#[derive(Debug, Deserialize, Serialize)]
struct ProfileRow {
    user_id: String,
    gender: String,
    age: String,
    zip: String,
}

impl ProfileRow {
    fn into_profile(self, path: &Path, line: usize) -> Result<UserProfile, DataError> {
        let age = if self.age.is_empty() {
            None
        } else {
            let age: u32 = self.age.parse().map_err(|_| DataError::BadRecord {
                path: path.display().to_string(),
                line,
                msg: format!("bad age {:?}", self.age),
            })?;
            if !(13..=110).contains(&age) {
                return Err(DataError::BadRecord {
                    path: path.display().to_string(),
                    line,
                    msg: format!("age {age} outside [13, 110]"),
                });
            }
            Some(age)
        };
        let zip = if self.zip.is_empty() {
            None
        } else {
            if self.zip.len() != 5 || !self.zip.bytes().all(|b| b.is_ascii_digit()) {
                return Err(DataError::BadRecord {
                    path: path.display().to_string(),
                    line,
                    msg: format!("zip {:?} is not 5 digits", self.zip),
                });
            }
            Some(self.zip)
        };
        Ok(UserProfile {
            user_id: self.user_id,
            gender: Gender::parse(&self.gender),
            age,
            zip,
            income_cents: None,
        })
    }
}

pub fn write_profiles_csv(path: &Path, profiles: &[UserProfile]) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["user_id", "gender", "age", "zip"])?;
    for p in profiles {
        writer.write_record([
            p.user_id.as_str(),
            p.gender.as_str(),
            &p.age.map(|a| a.to_string()).unwrap_or_default(),
            p.zip.as_deref().unwrap_or(""),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_taxonomy_csv(path: &Path) -> Result<CategoryTaxonomy, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut taxonomy = CategoryTaxonomy::new();
    for (i, row) in reader.deserialize::<(String, String, String, String)>().enumerate() {
        let (item_id, cat1, cat2, cat3) = row?;
        if cat1.is_empty() || cat2.is_empty() || cat3.is_empty() {
            return Err(DataError::BadRecord {
                path: path.display().to_string(),
                line: i + 2,
                msg: format!("taxonomy leaf for {item_id} is not depth 3"),
            });
        }
        taxonomy.insert(&item_id, CategoryPath::leaf(&cat1, &cat2, &cat3))?;
    }
    Ok(taxonomy)
}

pub fn write_taxonomy_csv(path: &Path, taxonomy: &CategoryTaxonomy) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["item_id", "cat1", "cat2", "cat3"])?;
    for (item_id, path_) in taxonomy.iter() {
        writer.write_record([
            item_id.as_str(),
            &path_.l1,
            path_.l2.as_deref().unwrap_or(""),
            path_.l3.as_deref().unwrap_or(""),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_edges_csv(path: &Path) -> Result<Vec<(String, String, u64)>, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut edges = Vec::new();
    for row in reader.deserialize::<(String, String, u64)>() {
        let (src, dst, count) = row?;
        edges.push((src, dst, count));
    }
    Ok(edges)
}

pub fn write_edges_csv(path: &Path, edges: &[(String, String, u64)]) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["src", "dst", "count"])?;
    for (src, dst, count) in edges {
        writer.write_record([src.as_str(), dst.as_str(), &count.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_zip_income_csv(path: &Path) -> Result<Vec<ZipIncomeRow>, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize::<ZipIncomeRow>() {
        rows.push(row?);
    }
    Ok(rows)
}

pub fn write_zip_income_csv(path: &Path, rows: &[ZipIncomeRow]) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["zip", "median_income_usd"])?;
    for row in rows {
        writer.write_record([row.zip.as_str(), &format!("{}", row.median_income_usd)])?;
    }
    writer.flush()?;
    Ok(())
}

/// zip -> UTC offset in minutes.
pub fn read_zip_timezone_csv(path: &Path) -> Result<BTreeMap<String, i32>, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut map = BTreeMap::new();
    for row in reader.deserialize::<(String, i32)>() {
        let (zip, offset) = row?;
        map.insert(zip, offset);
    }
    Ok(map)
}

pub fn write_zip_timezone_csv(
    path: &Path,
    offsets: &BTreeMap<String, i32>,
) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["zip", "utc_offset_minutes"])?;
    for (zip, offset) in offsets {
        writer.write_record([zip.as_str(), &offset.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

/// Loads a dataset directory holding events.jsonl, profiles.csv, and
/// taxonomy.csv, joining zip_income.csv when present. Applies the standard
/// ingestion filters.
pub fn load_dataset_dir(dir: &Path, max_purchases: usize) -> Result<IngestOutcome, DataError> {
    let records = read_events_jsonl(&dir.join("events.jsonl"))?;
    let profiles_path = dir.join("profiles.csv");
    let mut profiles = if profiles_path.exists() {
        read_profiles_csv(&profiles_path)?
    } else {
        Vec::new()
    };
    let taxonomy_path = dir.join("taxonomy.csv");
    let taxonomy = if taxonomy_path.exists() {
        read_taxonomy_csv(&taxonomy_path)?
    } else {
        CategoryTaxonomy::new()
    };
    let income_path = dir.join("zip_income.csv");
    if income_path.exists() {
        let table = read_zip_income_csv(&income_path)?;
        super::join_income(&mut profiles.iter_mut(), &table)?;
    }
    Ok(super::ingest_and_filter(
        records,
        profiles,
        taxonomy,
        max_purchases,
        None,
    ))
}

/// Loads edges.csv from a dataset directory into a retained-edge graph,
/// if the file exists.
pub fn load_graph_dir(
    dir: &Path,
    min_messages: u64,
) -> Result<Option<super::EmailGraph>, DataError> {
    let edges_path = dir.join("edges.csv");
    if !edges_path.exists() {
        return Ok(None);
    }
    let edges = read_edges_csv(&edges_path)?;
    Ok(Some(super::build_graph(&edges, min_messages)))
}

/// Serializes a dataset back to records in deterministic order.
pub fn dataset_to_records(dataset: &Dataset) -> Vec<EventRecord> {
    dataset.iter_events().map(EventRecord::from_event).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn events_jsonl_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let records = vec![EventRecord {
            user_id: "u1".into(),
            ts: 1_391_212_800,
            item_id: "item-1".into(),
            item_name: "Widget".into(),
            price_cents: 1299,
            order_id: "o-1".into(),
            merchant_id: "acme".into(),
            cat1: "Home".into(),
            cat2: "Kitchen".into(),
            cat3: "Gadgets".into(),
        }];
        write_events_jsonl(&path, &records).unwrap();
        assert_eq!(read_events_jsonl(&path).unwrap(), records);
    }

    #[test]
    fn profiles_csv_validates_age_and_zip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("profiles.csv");
        std::fs::write(&path, "user_id,gender,age,zip\nu1,female,30,90292\nu2,male,,\n").unwrap();
        let profiles = read_profiles_csv(&path).unwrap();
        assert_eq!(profiles.len(), 2);
        assert_eq!(profiles[0].age, Some(30));
        assert_eq!(profiles[1].zip, None);

        std::fs::write(&path, "user_id,gender,age,zip\nu1,female,12,90292\n").unwrap();
        assert!(read_profiles_csv(&path).is_err());
        std::fs::write(&path, "user_id,gender,age,zip\nu1,female,30,9029\n").unwrap();
        assert!(read_profiles_csv(&path).is_err());
    }

    #[test]
    fn taxonomy_csv_requires_depth_3() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("taxonomy.csv");
        std::fs::write(&path, "item_id,cat1,cat2,cat3\ni1,A,B,\n").unwrap();
        assert!(read_taxonomy_csv(&path).is_err());
    }
}
