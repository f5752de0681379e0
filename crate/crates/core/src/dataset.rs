//! Interaction logs, label binarization, chronological splitting and
//! warm/cold tagging of test rows.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no interactions to split")]
    Empty,
}

impl DatasetError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One observed (user, item, rating, timestamp) event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledInteraction {
    #[serde(flatten)]
    pub interaction: Interaction,
    pub label: u8,
}

impl LabeledInteraction {
    pub fn user_id(&self) -> &str {
        &self.interaction.user_id
    }

    pub fn item_id(&self) -> &str {
        &self.interaction.item_id
    }

    pub fn timestamp(&self) -> u64 {
        self.interaction.timestamp
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

/// Column layout of a delimited interaction file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionSchema {
    pub separator: String,
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: usize,
    pub timestamp_col: usize,
    pub has_header: bool,
}

impl InteractionSchema {
    /// `user::item::rating::timestamp`, as in MovieLens `ratings.dat`.
    pub fn movielens() -> Self {
        Self {
            separator: "::".into(),
            ..Self::csv()
        }
    }

    pub fn csv() -> Self {
        Self {
            separator: ",".into(),
            user_col: 0,
            item_col: 1,
            rating_col: 2,
            timestamp_col: 3,
            has_header: false,
        }
    }

    fn validate(&self) -> Result<(), DatasetError> {
        if self.separator.is_empty() {
            return Err(DatasetError::Config("empty separator".into()));
        }
        let cols = [
            self.user_col,
            self.item_col,
            self.rating_col,
            self.timestamp_col,
        ];
        for (i, a) in cols.iter().enumerate() {
            if cols[i + 1..].contains(a) {
                return Err(DatasetError::Config(format!(
                    "column {a} assigned to more than one field"
                )));
            }
        }
        Ok(())
    }

    fn width(&self) -> usize {
        1 + self
            .user_col
            .max(self.item_col)
            .max(self.rating_col)
            .max(self.timestamp_col)
    }
}

impl Default for InteractionSchema {
    fn default() -> Self {
        Self::csv()
    }
}

/// Column layout of a delimited item catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogSchema {
    pub separator: String,
    pub item_col: usize,
    pub title_col: usize,
    pub has_header: bool,
}

impl CatalogSchema {
    /// `item::title::genres`, as in MovieLens `movies.dat`.
    pub fn movielens() -> Self {
        Self {
            separator: "::".into(),
            ..Self::csv()
        }
    }

    pub fn csv() -> Self {
        Self {
            separator: ",".into(),
            item_col: 0,
            title_col: 1,
            has_header: false,
        }
    }
}

impl Default for CatalogSchema {
    fn default() -> Self {
        Self::csv()
    }
}

/// Reads a text file, falling back to Latin-1 for lines that are not UTF-8
/// (the MovieLens dumps are Latin-1).
fn read_lines(path: &Path) -> Result<Vec<String>, DatasetError> {
    let bytes = fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    let lines = bytes
        .split(|&b| b == b'\n')
        .map(|raw| {
            let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
            match std::str::from_utf8(raw) {
                Ok(s) => s.to_owned(),
                Err(_) => raw.iter().map(|&b| b as char).collect(),
            }
        })
        .collect::<Vec<_>>();
    Ok(lines)
}

pub fn ingest_interactions(
    path: &Path,
    schema: &InteractionSchema,
) -> Result<Vec<Interaction>, DatasetError> {
    schema.validate()?;
    let lines = read_lines(path)?;
    let mut out = Vec::with_capacity(lines.len());
    let skip = usize::from(schema.has_header);
    for (idx, line) in lines.iter().enumerate().skip(skip) {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let err = |message: String| DatasetError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.split(schema.separator.as_str()).collect();
        if fields.len() < schema.width() {
            return Err(err(format!(
                "expected at least {} fields, found {}",
                schema.width(),
                fields.len()
            )));
        }
        let user_id = fields[schema.user_col].trim();
        let item_id = fields[schema.item_col].trim();
        if user_id.is_empty() || item_id.is_empty() {
            return Err(err("empty user or item identifier".into()));
        }
        let rating_raw = fields[schema.rating_col].trim();
        let rating: f64 = rating_raw
            .parse()
            .ok()
            .filter(|r: &f64| r.is_finite())
            .ok_or_else(|| err(format!("unparsable rating {rating_raw:?}")))?;
        let ts_raw = fields[schema.timestamp_col].trim();
        let timestamp: u64 = ts_raw
            .parse()
            .map_err(|_| err(format!("unparsable timestamp {ts_raw:?}")))?;
        out.push(Interaction {
            user_id: user_id.to_owned(),
            item_id: item_id.to_owned(),
            rating,
            timestamp,
        });
    }
    Ok(out)
}

/// label = 1 iff rating > threshold.
pub fn binarize_labels(interactions: &[Interaction], positive_threshold: f64) -> Vec<LabeledInteraction> {
    interactions
        .iter()
        .map(|i| LabeledInteraction {
            interaction: i.clone(),
            label: u8::from(i.rating > positive_threshold),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self, DatasetError> {
        let r = Self { train, valid, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(DatasetError::Config(format!(
                "split ratios must be positive, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Config(format!(
                "split ratios must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

/// Bidirectional map between raw identifiers and dense indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EntityIndex {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl EntityIndex {
    pub fn insert(&mut self, id: &str) -> usize {
        if let Some(&i) = self.lookup.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.lookup.insert(id.to_owned(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Valid,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Valid, Partition::Test];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Valid => "valid",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Train/valid/test partitions plus dense index maps.
///
/// Indices are assigned in order of first appearance, scanning train, then
/// valid, then test; so every training entity has a smaller index than any
/// entity first seen later.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSet {
    pub train: Vec<LabeledInteraction>,
    pub valid: Vec<LabeledInteraction>,
    pub test: Vec<LabeledInteraction>,
    pub user_index: EntityIndex,
    pub item_index: EntityIndex,
}

impl SplitSet {
    /// Builds a split from already-partitioned rows, deriving the index maps.
    pub fn from_partitions(
        train: Vec<LabeledInteraction>,
        valid: Vec<LabeledInteraction>,
        test: Vec<LabeledInteraction>,
    ) -> Self {
        let mut user_index = EntityIndex::default();
        let mut item_index = EntityIndex::default();
        for row in train.iter().chain(&valid).chain(&test) {
            user_index.insert(row.user_id());
            item_index.insert(row.item_id());
        }
        Self {
            train,
            valid,
            test,
            user_index,
            item_index,
        }
    }

    pub fn partition(&self, p: Partition) -> &[LabeledInteraction] {
        match p {
            Partition::Train => &self.train,
            Partition::Valid => &self.valid,
            Partition::Test => &self.test,
        }
    }

    pub fn n_users(&self) -> usize {
        self.user_index.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_index.len()
    }

    /// Dense (user, item, label) triples of a partition.
    pub fn indexed(&self, p: Partition) -> Vec<(usize, usize, u8)> {
        self.partition(p)
            .iter()
            .map(|r| {
                (
                    self.user_index.get(r.user_id()).expect("indexed user"),
                    self.item_index.get(r.item_id()).expect("indexed item"),
                    r.label,
                )
            })
            .collect()
    }

    /// Writes `train.tsv`, `valid.tsv` and `test.tsv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
        for p in Partition::ALL {
            let path = dir.join(format!("{}.tsv", p.name()));
            let mut buf = Vec::new();
            writeln!(buf, "user_id\titem_id\trating\ttimestamp\tlabel").unwrap();
            for r in self.partition(p) {
                let i = &r.interaction;
                writeln!(
                    buf,
                    "{}\t{}\t{}\t{}\t{}",
                    i.user_id, i.item_id, i.rating, i.timestamp, r.label
                )
                .unwrap();
            }
            fs::write(&path, buf).map_err(|e| DatasetError::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let mut parts = Vec::with_capacity(3);
        for p in Partition::ALL {
            let path = dir.join(format!("{}.tsv", p.name()));
            parts.push(load_partition(&path)?);
        }
        let test = parts.pop().unwrap();
        let valid = parts.pop().unwrap();
        let train = parts.pop().unwrap();
        Ok(Self::from_partitions(train, valid, test))
    }
}

fn load_partition(path: &Path) -> Result<Vec<LabeledInteraction>, DatasetError> {
    let schema = InteractionSchema {
        separator: "\t".into(),
        has_header: true,
        ..InteractionSchema::csv()
    };
    let rows = ingest_interactions(path, &schema)?;
    let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    let labels = text
        .lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, l)| match l.split('\t').nth(4).map(str::trim) {
            Some("0") => Ok(0),
            Some("1") => Ok(1),
            other => Err(DatasetError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("label must be 0 or 1, found {other:?}"),
            }),
        })
        .collect::<Result<Vec<u8>, _>>()?;
    Ok(rows
        .into_iter()
        .zip(labels)
        .map(|(interaction, label)| LabeledInteraction { interaction, label })
        .collect())
}

/// Sorts by timestamp (stable) and cuts at the ratio boundaries.
pub fn chronological_split(
    labeled: &[LabeledInteraction],
    ratios: SplitRatios,
) -> Result<SplitSet, DatasetError> {
    ratios.validate()?;
    if labeled.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut rows = labeled.to_vec();
    rows.sort_by_key(|r| r.timestamp());
    let n = rows.len() as f64;
    let n_train = (n * ratios.train).round() as usize;
    let n_valid_end = ((n * (ratios.train + ratios.valid)).round() as usize).max(n_train);
    let test = rows.split_off(n_valid_end.min(rows.len()));
    let valid = rows.split_off(n_train.min(rows.len()));
    Ok(SplitSet::from_partitions(rows, valid, test))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentTag {
    Warm,
    Cold,
}

impl SegmentTag {
    pub fn name(self) -> &'static str {
        match self {
            SegmentTag::Warm => "warm",
            SegmentTag::Cold => "cold",
        }
    }
}

impl fmt::Display for SegmentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One tag per test row, aligned with `split.test`. A row is warm iff both
/// its user and its item have at least the given number of training rows.
pub fn partition_warm_cold(split: &SplitSet, min_user: usize, min_item: usize) -> Vec<SegmentTag> {
    let mut user_counts: HashMap<&str, usize> = HashMap::new();
    let mut item_counts: HashMap<&str, usize> = HashMap::new();
    for r in &split.train {
        *user_counts.entry(r.user_id()).or_default() += 1;
        *item_counts.entry(r.item_id()).or_default() += 1;
    }
    split
        .test
        .iter()
        .map(|r| {
            let u = user_counts.get(r.user_id()).copied().unwrap_or(0);
            let i = item_counts.get(r.item_id()).copied().unwrap_or(0);
            if u >= min_user && i >= min_item {
                SegmentTag::Warm
            } else {
                SegmentTag::Cold
            }
        })
        .collect()
}

/// item id → title.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ItemCatalog {
    titles: HashMap<String, String>,
}

impl ItemCatalog {
    pub fn title(&self, item_id: &str) -> Option<&str> {
        self.titles.get(item_id).map(String::as_str)
    }

    pub fn insert(&mut self, item_id: impl Into<String>, title: impl Into<String>) -> Option<String> {
        self.titles.insert(item_id.into(), title.into())
    }

    pub fn len(&self) -> usize {
        self.titles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.titles.is_empty()
    }
}

impl FromIterator<(String, String)> for ItemCatalog {
    fn from_iter<T: IntoIterator<Item = (String, String)>>(iter: T) -> Self {
        Self {
            titles: iter.into_iter().collect(),
        }
    }
}

pub fn load_item_catalog(path: &Path, schema: &CatalogSchema) -> Result<ItemCatalog, DatasetError> {
    if schema.separator.is_empty() || schema.item_col == schema.title_col {
        return Err(DatasetError::Config("bad catalog schema".into()));
    }
    let lines = read_lines(path)?;
    let mut catalog = ItemCatalog::default();
    for (idx, line) in lines.iter().enumerate().skip(usize::from(schema.has_header)) {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(schema.separator.as_str()).collect();
        let (Some(id), Some(title)) = (fields.get(schema.item_col), fields.get(schema.title_col))
        else {
            warn!("{}:{lineno}: too few fields, row skipped", path.display());
            continue;
        };
        let (id, title) = (id.trim(), title.trim());
        if id.is_empty() || title.is_empty() {
            warn!("{}:{lineno}: empty item id or title, row skipped", path.display());
            continue;
        }
        if catalog.insert(id, title).is_some() {
            warn!("{}:{lineno}: duplicate item {id}, keeping the later title", path.display());
        }
    }
    Ok(catalog)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String, DatasetError> {
    let bytes = fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// JSON summary of an ingest run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub source: String,
    pub source_sha256: String,
    pub ratios: SplitRatios,
    pub label_threshold: f64,
    pub counts: PartitionCounts,
    pub n_users: usize,
    pub n_items: usize,
    pub n_positive: usize,
}

impl SplitManifest {
    pub fn describe(split: &SplitSet, source: &Path, source_sha256: String, ratios: SplitRatios, label_threshold: f64) -> Self {
        let n_positive = Partition::ALL
            .iter()
            .flat_map(|p| split.partition(*p))
            .filter(|r| r.is_positive())
            .count();
        Self {
            source: source.display().to_string(),
            source_sha256,
            ratios,
            label_threshold,
            counts: PartitionCounts {
                train: split.train.len(),
                valid: split.valid.len(),
                test: split.test.len(),
            },
            n_users: split.n_users(),
            n_items: split.n_items(),
            n_positive,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn row(user: &str, item: &str, label: u8, ts: u64) -> LabeledInteraction {
        LabeledInteraction {
            interaction: Interaction {
                user_id: user.into(),
                item_id: item.into(),
                rating: if label == 1 { 5.0 } else { 1.0 },
                timestamp: ts,
            },
            label,
        }
    }

    #[test]
    fn parses_a_csv_row() {
        let f = write_tmp("1,1193,5,978300760\n");
        let rows = ingest_interactions(f.path(), &InteractionSchema::csv()).unwrap();
        assert_eq!(
            rows,
            vec![Interaction {
                user_id: "1".into(),
                item_id: "1193".into(),
                rating: 5.0,
                timestamp: 978300760
            }]
        );
    }

    #[test]
    fn movielens_separator() {
        let f = write_tmp("1::1193::5::978300760\n2::661::3::978302109\n");
        let rows = ingest_interactions(f.path(), &InteractionSchema::movielens()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].item_id, "661");
    }

    #[test]
    fn bad_rating_names_the_line() {
        let f = write_tmp("1,10,4,5\n1,1193,high,978300760\n");
        let err = ingest_interactions(f.path(), &InteractionSchema::csv()).unwrap_err();
        match err {
            DatasetError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_timestamp_rejected() {
        let f = write_tmp("1,10,4,-5\n");
        assert!(ingest_interactions(f.path(), &InteractionSchema::csv()).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = ingest_interactions(Path::new("/nonexistent/ratings.dat"), &InteractionSchema::csv())
            .unwrap_err();
        assert!(matches!(err, DatasetError::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/ratings.dat"));
    }

    #[test]
    fn label_threshold_is_strict() {
        let rows: Vec<Interaction> = [5.0, 3.0, 1.0]
            .iter()
            .map(|&rating| Interaction {
                user_id: "u".into(),
                item_id: "i".into(),
                rating,
                timestamp: 0,
            })
            .collect();
        let labels: Vec<u8> = binarize_labels(&rows, 3.0).iter().map(|r| r.label).collect();
        assert_eq!(labels, vec![1, 0, 0]);
    }

    #[test]
    fn split_sizes_follow_ratios() {
        let rows: Vec<_> = (0..10).map(|t| row("u", &t.to_string(), 1, t)).collect();
        let split = chronological_split(&rows, SplitRatios::default()).unwrap();
        assert_eq!((split.train.len(), split.valid.len(), split.test.len()), (8, 1, 1));
    }

    #[test]
    fn split_ties_are_stable() {
        // Rows 8 and 9 share a timestamp across the train/valid boundary.
        let mut rows: Vec<_> = (0..8).map(|t| row("u", &format!("a{t}"), 1, t)).collect();
        rows.push(row("u", "first", 1, 100));
        rows.push(row("u", "second", 1, 100));
        let split = chronological_split(&rows, SplitRatios::new(0.8, 0.1, 0.1).unwrap()).unwrap();
        assert_eq!(split.train.len(), 8);
        assert_eq!(split.valid[0].item_id(), "first");
        assert_eq!(split.test[0].item_id(), "second");
    }

    #[test]
    fn split_rejects_empty_and_bad_ratios() {
        assert!(matches!(
            chronological_split(&[], SplitRatios::default()),
            Err(DatasetError::Empty)
        ));
        assert!(SplitRatios::new(0.5, 0.5, 0.5).is_err());
        assert!(SplitRatios::new(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn index_maps_cover_unseen_entities() {
        let rows = vec![row("a", "x", 1, 1), row("b", "y", 0, 2), row("c", "z", 1, 3)];
        let split = chronological_split(&rows, SplitRatios::new(0.34, 0.33, 0.33).unwrap()).unwrap();
        assert_eq!(split.user_index.get("a"), Some(0));
        assert_eq!(split.user_index.get("c"), Some(2));
        assert_eq!(split.n_items(), 3);
    }

    #[test]
    fn warm_cold_rules() {
        let mut train = Vec::new();
        for t in 0..10 {
            train.push(row("hot", &format!("pad{t}"), 1, t));
            train.push(row(&format!("padu{t}"), "popular", 1, t));
        }
        let test = vec![
            row("hot", "popular", 1, 50),
            row("stranger", "popular", 1, 51),
            row("hot", "brand_new", 0, 52),
        ];
        let split = SplitSet::from_partitions(train, vec![], test);
        assert_eq!(
            partition_warm_cold(&split, 3, 3),
            vec![SegmentTag::Warm, SegmentTag::Cold, SegmentTag::Cold]
        );
        assert!(partition_warm_cold(&split, 0, 0).iter().all(|t| *t == SegmentTag::Warm));
    }

    #[test]
    fn catalog_rules() {
        let f = write_tmp(
            "1193::One Flew Over the Cuckoo's Nest (1975)::Drama\n5::   ::Comedy\n7::Old::X\n7::New::X\n",
        );
        let cat = load_item_catalog(f.path(), &CatalogSchema::movielens()).unwrap();
        assert_eq!(cat.title("1193"), Some("One Flew Over the Cuckoo's Nest (1975)"));
        assert_eq!(cat.title("5"), None);
        assert_eq!(cat.title("7"), Some("New"));
        assert_eq!(cat.len(), 2);
    }

    #[test]
    fn catalog_latin1_fallback() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"9::Caf\xe9 (1999)::Drama\n").unwrap();
        let cat = load_item_catalog(f.path(), &CatalogSchema::movielens()).unwrap();
        assert_eq!(cat.title("9"), Some("Café (1999)"));
    }

    #[test]
    fn split_files_roundtrip() {
        let rows: Vec<_> = (0..20)
            .map(|t| row(&format!("u{}", t % 3), &format!("i{}", t % 7), (t % 2) as u8, t))
            .collect();
        let split = chronological_split(&rows, SplitRatios::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        split.save(dir.path()).unwrap();
        let loaded = SplitSet::load(dir.path()).unwrap();
        assert_eq!(loaded, split);
    }

    #[test]
    fn corrupted_split_file_fails() {
        let dir = tempfile::tempdir().unwrap();
        for p in Partition::ALL {
            fs::write(
                dir.path().join(format!("{p}.tsv")),
                "user_id\titem_id\trating\ttimestamp\tlabel\nu\ti\t5\t1\t7\n",
            )
            .unwrap();
        }
        assert!(SplitSet::load(dir.path()).is_err());
    }
}
