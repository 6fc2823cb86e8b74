//! Corpus loading, Turkish text normalization, deduplication, label mapping,
//! and stratified train/test splitting.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use crate::error::{Error, Result};

/// One advertisement record as it appears on disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRecord {
    /// Opaque identifier, kept only for traceability.
    pub id: String,
    /// Sector name, e.g. "Vize İşlemleri".
    pub category: String,
    /// Ad text, possibly with punctuation and mixed case.
    pub text: String,
}

/// A normalized ad text paired with its dense class id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledExample {
    pub text: String,
    pub label: usize,
}

/// Bijection between sector names and dense class ids.
///
/// Ids are assigned by sorting the distinct names, so the mapping depends only
/// on the set of names, not on record order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    pub fn from_categories<'a>(categories: impl IntoIterator<Item = &'a str>) -> Self {
        let mut names: Vec<String> = categories
            .into_iter()
            .map(|s| s.to_string())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        names.sort();
        LabelMap { names }
    }

    /// Wraps an existing ordered name list (e.g. from a checkpoint). The list
    /// must be free of duplicates.
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.clone()) {
                return Err(Error::Config(format!("duplicate label name {n:?}")));
            }
        }
        Ok(LabelMap { names })
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(|s| s.as_str())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Input file format for [`load_corpus`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum DataFormat {
    /// One JSON object per line with `id`, `category`, `text` fields.
    Jsonl,
    /// RFC 4180 CSV with an `id,category,text` header.
    Csv,
}

impl std::str::FromStr for DataFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DataFormat::Jsonl),
            "csv" => Ok(DataFormat::Csv),
            other => Err(Error::Config(format!(
                "unknown data format {other:?}; expected jsonl or csv"
            ))),
        }
    }
}

impl std::fmt::Display for DataFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DataFormat::Jsonl => "jsonl",
            DataFormat::Csv => "csv",
        })
    }
}

/// Reads records from `path`. Malformed lines abort with the 1-based line
/// number; an input with zero records is an error.
pub fn load_corpus(path: &Path, format: DataFormat) -> Result<Vec<RawRecord>> {
    let mut raw = String::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?
        .read_to_string(&mut raw)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;

    let records = match format {
        DataFormat::Jsonl => parse_jsonl(&raw)?,
        DataFormat::Csv => parse_csv(&raw)?,
    };
    if records.is_empty() {
        return Err(Error::EmptyCorpus {
            path: path.to_path_buf(),
        });
    }
    Ok(records)
}

fn parse_jsonl(raw: &str) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                line: line_no,
                reason: format!("invalid JSON: {e}"),
            })?;
        let field = |key: &str| -> Result<String> {
            match value.get(key) {
                Some(serde_json::Value::String(s)) => Ok(s.clone()),
                Some(serde_json::Value::Number(n)) => Ok(n.to_string()),
                Some(other) => Err(Error::MalformedRecord {
                    line: line_no,
                    reason: format!("field {key:?} has non-scalar value {other}"),
                }),
                None => Err(Error::MalformedRecord {
                    line: line_no,
                    reason: format!("missing field {key:?}"),
                }),
            }
        };
        let record = RawRecord {
            id: field("id")?,
            category: field("category")?,
            text: field("text")?,
        };
        validate_record(&record, line_no)?;
        records.push(record);
    }
    Ok(records)
}

fn parse_csv(raw: &str) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(raw.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedRecord {
            line: 1,
            reason: format!("invalid CSV header: {e}"),
        })?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MalformedRecord {
                line: 1,
                reason: format!("missing column {name:?} in header"),
            })
    };
    let (id_col, cat_col, text_col) = (col("id")?, col("category")?, col("text")?);

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(records.len() + 2);
            Error::MalformedRecord {
                line,
                reason: format!("invalid CSV row: {e}"),
            }
        })?;
        let line_no = row
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(records.len() + 2);
        let cell = |idx: usize| -> Result<String> {
            row.get(idx)
                .map(|s| s.to_string())
                .ok_or_else(|| Error::MalformedRecord {
                    line: line_no,
                    reason: format!("row has {} column(s), expected at least {}", row.len(), idx + 1),
                })
        };
        let record = RawRecord {
            id: cell(id_col)?,
            category: cell(cat_col)?,
            text: cell(text_col)?,
        };
        validate_record(&record, line_no)?;
        records.push(record);
    }
    Ok(records)
}

fn validate_record(record: &RawRecord, line: usize) -> Result<()> {
    if record.text.trim().is_empty() {
        return Err(Error::MalformedRecord {
            line,
            reason: "empty text".to_string(),
        });
    }
    if record.category.trim().is_empty() {
        return Err(Error::MalformedRecord {
            line,
            reason: "empty category".to_string(),
        });
    }
    Ok(())
}

fn punct_or_symbol() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{P}\p{S}]").expect("valid character class"))
}

/// Normalizes one ad text: every Unicode punctuation or symbol character
/// becomes a space, letters are lowercased, and whitespace runs collapse to
/// single spaces with the ends trimmed.
///
/// With `turkish` set, dotted and dotless I follow Turkish casing: 'I' becomes
/// 'ı' and 'İ' becomes 'i'. The function is idempotent either way.
pub fn normalize(text: &str, turkish: bool) -> String {
    let stripped = punct_or_symbol().replace_all(text, " ");
    let mut lowered = String::with_capacity(stripped.len());
    for ch in stripped.chars() {
        match ch {
            'I' if turkish => lowered.push('ı'),
            // Mapping 'İ' by hand avoids the combining dot that the default
            // Unicode lowercasing would emit.
            'İ' => lowered.push('i'),
            _ => lowered.extend(ch.to_lowercase()),
        }
    }
    let mut out = String::with_capacity(lowered.len());
    for word in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Normalizes every record's text in place.
pub fn normalize_records(records: &mut [RawRecord], turkish: bool) {
    for r in records.iter_mut() {
        r.text = normalize(&r.text, turkish);
    }
}

/// Removes records whose `(text, category)` pair was already seen, keeping the
/// first occurrence. Run this after normalization so near-duplicates that
/// differ only in case or punctuation collapse too.
pub fn dedup(records: Vec<RawRecord>) -> Vec<RawRecord> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if seen.insert((r.text.clone(), r.category.clone())) {
            out.push(r);
        }
    }
    out
}

/// Converts records to labeled examples using the given label map. Categories
/// missing from the map are an error.
pub fn to_examples(records: &[RawRecord], labels: &LabelMap) -> Result<Vec<LabeledExample>> {
    records
        .iter()
        .map(|r| {
            let label = labels.index(&r.category).ok_or_else(|| Error::UnknownLabel {
                name: r.category.clone(),
                known: labels.names().to_vec(),
            })?;
            Ok(LabeledExample {
                text: r.text.clone(),
                label,
            })
        })
        .collect()
}

/// A reproducible train/test partition.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub train_fraction: f64,
    pub seed: u64,
}

/// Splits examples so each class contributes `round(train_fraction * n_c)`
/// examples to the train side (ties round up). Class order inside each side
/// follows the input order of the shuffled class members, so the same seed
/// always produces the same partition.
pub fn stratified_split(
    examples: &[LabeledExample],
    labels: &LabelMap,
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labels.len()];
    for (i, ex) in examples.iter().enumerate() {
        let class = by_class.get_mut(ex.label).ok_or_else(|| Error::Config(format!(
            "example label {} out of range for {} classes",
            ex.label,
            labels.len()
        )))?;
        class.push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::InsufficientClassSize {
                name: labels.name(c).unwrap_or("?").to_string(),
                count: members.len(),
            });
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        // Independent RNG stream per class: the partition of one class does
        // not depend on how many draws other classes consumed.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        let n_train = round_half_up(train_fraction * shuffled.len() as f64);
        for (pos, &idx) in shuffled.iter().enumerate() {
            if pos < n_train {
                train.push(examples[idx].clone());
            } else {
                test.push(examples[idx].clone());
            }
        }
    }

    Ok(DatasetSplit {
        train,
        test,
        train_fraction,
        seed,
    })
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Number of records per category, sorted by category name.
pub fn category_counts(records: &[RawRecord]) -> Vec<(String, u64)> {
    let mut counts: std::collections::BTreeMap<String, u64> = Default::default();
    for r in records {
        *counts.entry(r.category.clone()).or_insert(0) += 1;
    }
    counts.into_iter().collect()
}

/// Histogram of whitespace-separated word counts, sorted by word count.
pub fn word_count_histogram(texts: impl IntoIterator<Item = impl AsRef<str>>) -> Vec<(usize, u64)> {
    let mut counts: std::collections::BTreeMap<usize, u64> = Default::default();
    for t in texts {
        let words = t.as_ref().split_whitespace().count();
        *counts.entry(words).or_insert(0) += 1;
    }
    counts.into_iter().collect()
}
