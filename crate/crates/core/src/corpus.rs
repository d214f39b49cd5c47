//! Survey records: ingestion, validation, deduplication and train/test splitting.
//!
//! Records are read from CSV (header row, RFC-4180 quoting) or JSONL (one object
//! per line). Both formats share the same field names:
//!
//! | field          | required | notes                                   |
//! |----------------|----------|-----------------------------------------|
//! | `record_id`    | yes      | unique within the corpus                |
//! | `species_id`   | yes      |                                         |
//! | `office_id`    | yes      |                                         |
//! | `text`         | yes      | non-empty after trimming                |
//! | `binary_label` | no       | `0` (absent) or `1` (present)           |
//! | `multi_label`  | no       | integer class in `[-1, 5]`              |
//! | `split`        | no       | `train` or `test`                       |
//! | `intensity`    | no       | planted per-record intensity (synthetic)|

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::ids::RecordId;
use crate::labels::{FrequencyClass, Presence};

pub const REQUIRED_FIELDS: [&str; 4] = ["record_id", "species_id", "office_id", "text"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// One species x locality free-text response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub record_id: RecordId,
    pub species_id: String,
    pub office_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_label: Option<Presence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi_label: Option<FrequencyClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<f64>,
}

impl SurveyRecord {
    pub fn new(
        record_id: impl Into<RecordId>,
        species_id: impl Into<String>,
        office_id: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        Self {
            record_id: record_id.into(),
            species_id: species_id.into(),
            office_id: office_id.into(),
            text: text.into(),
            binary_label: None,
            multi_label: None,
            split: None,
            intensity: None,
        }
    }

    /// Binary label, falling back to the one implied by the multi-class label.
    pub fn presence(&self) -> Option<Presence> {
        self.binary_label
            .or_else(|| self.multi_label.map(FrequencyClass::presence))
    }
}

/// Deduplication key: NFC-normalized text with outer whitespace trimmed.
pub fn text_key(text: &str) -> String {
    text.trim().nfc().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: PathBuf,
    pub ingested_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "jsonl" | "ndjson" => Some(Format::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the source file.
    pub line: u64,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "line {}: field `{}`: {}", self.line, field, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: missing required field `{field}`{}", .line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    MissingField { field: String, line: Option<u64> },
    #[error("integrity error: duplicate record_id `{id}` (lines {first_line} and {line})")]
    DuplicateId {
        id: RecordId,
        first_line: u64,
        line: u64,
    },
    #[error("{} invalid row(s); first: {}", .0.len(), .0[0])]
    Rows(Vec<RowError>),
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    FractionOutOfRange(f64),
    #[error("json error on line {line}: {message}")]
    Json { line: u64, message: String },
}

/// An ordered, validated collection of survey records.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<SurveyRecord>,
    pub provenance: Provenance,
}

impl Corpus {
    /// Builds a corpus from in-memory records, applying the same validation as ingest.
    pub fn from_records(records: Vec<SurveyRecord>) -> Result<Self, CorpusError> {
        let mut errors = Vec::new();
        let mut seen: HashMap<RecordId, u64> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            let line = i as u64 + 1;
            if let Some(&first_line) = seen.get(&r.record_id) {
                return Err(CorpusError::DuplicateId {
                    id: r.record_id.clone(),
                    first_line,
                    line,
                });
            }
            seen.insert(r.record_id.clone(), line);
            if let Err(e) = validate_record(r, line) {
                errors.push(e);
            }
        }
        if !errors.is_empty() {
            return Err(CorpusError::Rows(errors));
        }
        Ok(Self {
            records,
            provenance: Provenance {
                source: PathBuf::from("<memory>"),
                ingested_at: Utc::now(),
            },
        })
    }

    pub fn records(&self) -> &[SurveyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &RecordId) -> Option<&SurveyRecord> {
        self.records.iter().find(|r| &r.record_id == id)
    }

    /// Id → record lookup table.
    pub fn index(&self) -> HashMap<&RecordId, &SurveyRecord> {
        self.records.iter().map(|r| (&r.record_id, r)).collect()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SurveyRecord> {
        self.records.iter()
    }

    /// Records carrying the given split label.
    pub fn with_split(&self, split: Split) -> Vec<&SurveyRecord> {
        self.records
            .iter()
            .filter(|r| r.split == Some(split))
            .collect()
    }

    /// Sub-corpus of records matching a predicate, keeping provenance.
    pub fn filter(&self, mut keep: impl FnMut(&SurveyRecord) -> bool) -> Corpus {
        Corpus {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn into_records(self) -> Vec<SurveyRecord> {
        self.records
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<(), CorpusError> {
        let file = File::create(path).map_err(|source| CorpusError::Io {
            path: path.to_owned(),
            source,
        })?;
        match format {
            Format::Csv => self.write_csv(file),
            Format::Jsonl => self.write_jsonl(file).map_err(|source| CorpusError::Io {
                path: path.to_owned(),
                source,
            }),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CorpusError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "record_id",
            "species_id",
            "office_id",
            "text",
            "binary_label",
            "multi_label",
            "split",
            "intensity",
        ])?;
        for r in &self.records {
            wtr.write_record([
                r.record_id.to_string(),
                r.species_id.clone(),
                r.office_id.clone(),
                r.text.clone(),
                r.binary_label.map(|b| b.as_i8().to_string()).unwrap_or_default(),
                r.multi_label.map(|c| c.code().to_string()).unwrap_or_default(),
                r.split.map(|s| s.to_string()).unwrap_or_default(),
                r.intensity.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        wtr.flush().map_err(|e| CorpusError::Csv(e.into()))?;
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a SurveyRecord;
    type IntoIter = std::slice::Iter<'a, SurveyRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

fn validate_record(r: &SurveyRecord, line: u64) -> Result<(), RowError> {
    let err = |field: &str, message: String| RowError {
        line,
        field: Some(field.to_owned()),
        message,
    };
    for (field, value) in [
        ("record_id", r.record_id.as_str()),
        ("species_id", r.species_id.as_str()),
        ("office_id", r.office_id.as_str()),
    ] {
        if value.trim().is_empty() {
            return Err(err(field, "must not be empty".into()));
        }
    }
    if r.text.trim().is_empty() {
        return Err(err("text", "empty after trimming".into()));
    }
    if let (Some(b), Some(m)) = (r.binary_label, r.multi_label) {
        if m.presence() != b {
            return Err(err(
                "binary_label",
                format!(
                    "inconsistent with multi_label {}: expected {}",
                    m.code(),
                    m.presence().as_i8()
                ),
            ));
        }
    }
    if let Some(v) = r.intensity {
        if !v.is_finite() {
            return Err(err("intensity", "must be finite".into()));
        }
    }
    Ok(())
}

/// Field values of one source row, keyed by field name. Absent and empty values are `None`.
struct RawRow {
    line: u64,
    fields: HashMap<String, String>,
}

impl RawRow {
    fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .get(key)
            .map(String::as_str)
            .filter(|s| !s.trim().is_empty())
    }

    fn into_record(self) -> Result<SurveyRecord, RowError> {
        let line = self.line;
        let err = |field: &str, message: String| RowError {
            line,
            field: Some(field.to_owned()),
            message,
        };
        let required = |field: &str| -> Result<String, RowError> {
            self.fields
                .get(field)
                .cloned()
                .ok_or_else(|| err(field, "missing".into()))
        };
        let mut rec = SurveyRecord::new(
            required("record_id")?,
            required("species_id")?,
            required("office_id")?,
            required("text")?,
        );
        if let Some(v) = self.get("binary_label") {
            let n: i64 = v
                .trim()
                .parse()
                .map_err(|_| err("binary_label", format!("not an integer: {v:?}")))?;
            rec.binary_label = Some(
                Presence::from_i64(n)
                    .ok_or_else(|| err("binary_label", format!("{n} not in {{0, 1}}")))?,
            );
        }
        if let Some(v) = self.get("multi_label") {
            let n: i64 = v
                .trim()
                .parse()
                .map_err(|_| err("multi_label", format!("not an integer: {v:?}")))?;
            rec.multi_label = Some(
                FrequencyClass::from_code(n)
                    .ok_or_else(|| err("multi_label", format!("{n} not in [-1, 5]")))?,
            );
        }
        if let Some(v) = self.get("split") {
            rec.split = Some(v.parse().map_err(|m| err("split", m))?);
        }
        if let Some(v) = self.get("intensity") {
            rec.intensity = Some(
                v.trim()
                    .parse()
                    .map_err(|_| err("intensity", format!("not a number: {v:?}")))?,
            );
        }
        validate_record(&rec, line)?;
        Ok(rec)
    }
}

fn read_csv_rows(path: &Path) -> Result<Vec<RawRow>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CorpusError::Io {
                path: path.to_owned(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => CorpusError::Csv(e),
        })?;
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().trim_start_matches('\u{feff}').to_owned())
        .collect();
    for field in REQUIRED_FIELDS {
        if !headers.iter().any(|h| h == field) {
            return Err(CorpusError::MissingField {
                field: field.to_owned(),
                line: None,
            });
        }
    }
    let mut rows = Vec::new();
    for result in rdr.records() {
        let rec = result?;
        let line = rec.position().map(|p| p.line()).unwrap_or_default();
        let fields = headers
            .iter()
            .cloned()
            .zip(rec.iter().map(str::to_owned))
            .collect();
        rows.push(RawRow { line, fields });
    }
    Ok(rows)
}

fn read_jsonl_rows(path: &Path) -> Result<Vec<RawRow>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| CorpusError::Json {
                line: line_no,
                message: e.to_string(),
            })?;
        let serde_json::Value::Object(map) = value else {
            return Err(CorpusError::Json {
                line: line_no,
                message: "expected a JSON object".into(),
            });
        };
        for field in REQUIRED_FIELDS {
            if !map.contains_key(field) {
                return Err(CorpusError::MissingField {
                    field: field.to_owned(),
                    line: Some(line_no),
                });
            }
        }
        let fields = map
            .into_iter()
            .filter_map(|(k, v)| {
                let s = match v {
                    serde_json::Value::Null => return None,
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                };
                Some((k, s))
            })
            .collect();
        rows.push(RawRow {
            line: line_no,
            fields,
        });
    }
    Ok(rows)
}

/// Result of a lenient ingest: the valid records plus every rejected row.
#[derive(Debug)]
pub struct IngestReport {
    pub corpus: Corpus,
    pub rejected: Vec<RowError>,
}

/// Reads and validates a corpus. Any invalid row fails the whole ingest.
pub fn ingest(path: &Path, format: Format) -> Result<Corpus, CorpusError> {
    let report = ingest_lenient(path, format)?;
    if !report.rejected.is_empty() {
        return Err(CorpusError::Rows(report.rejected));
    }
    Ok(report.corpus)
}

/// Reads a corpus, skipping invalid rows and reporting them with their line numbers.
///
/// Schema errors (missing columns) and duplicate ids still fail the ingest.
pub fn ingest_lenient(path: &Path, format: Format) -> Result<IngestReport, CorpusError> {
    let rows = match format {
        Format::Csv => read_csv_rows(path)?,
        Format::Jsonl => read_jsonl_rows(path)?,
    };
    let mut records = Vec::with_capacity(rows.len());
    let mut rejected = Vec::new();
    let mut seen: HashMap<RecordId, u64> = HashMap::new();
    for row in rows {
        let line = row.line;
        match row.into_record() {
            Ok(rec) => {
                if let Some(&first_line) = seen.get(&rec.record_id) {
                    return Err(CorpusError::DuplicateId {
                        id: rec.record_id,
                        first_line,
                        line,
                    });
                }
                seen.insert(rec.record_id.clone(), line);
                records.push(rec);
            }
            Err(e) => rejected.push(e),
        }
    }
    Ok(IngestReport {
        corpus: Corpus {
            records,
            provenance: Provenance {
                source: path.to_owned(),
                ingested_at: Utc::now(),
            },
        },
        rejected,
    })
}

/// Two duplicate texts whose gold labels disagree. The first record's labels are kept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelConflict {
    pub kept: RecordId,
    pub dropped: RecordId,
    pub kept_labels: (Option<Presence>, Option<FrequencyClass>),
    pub dropped_labels: (Option<Presence>, Option<FrequencyClass>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dedup {
    pub corpus: Corpus,
    /// Every input id mapped to the id of the surviving record with the same text.
    pub mapping: BTreeMap<RecordId, RecordId>,
    pub conflicts: Vec<LabelConflict>,
}

/// Removes records whose text duplicates an earlier record; first occurrence wins.
pub fn deduplicate(c: &Corpus) -> Dedup {
    let mut first: HashMap<String, usize> = HashMap::new();
    let mut kept = Vec::new();
    let mut mapping = BTreeMap::new();
    let mut conflicts = Vec::new();
    for r in &c.records {
        match first.get(&text_key(&r.text)) {
            Some(&idx) => {
                let survivor: &SurveyRecord = &kept[idx];
                mapping.insert(r.record_id.clone(), survivor.record_id.clone());
                if survivor.binary_label != r.binary_label || survivor.multi_label != r.multi_label
                {
                    tracing::warn!(
                        kept = %survivor.record_id,
                        dropped = %r.record_id,
                        "duplicate text with conflicting labels"
                    );
                    conflicts.push(LabelConflict {
                        kept: survivor.record_id.clone(),
                        dropped: r.record_id.clone(),
                        kept_labels: (survivor.binary_label, survivor.multi_label),
                        dropped_labels: (r.binary_label, r.multi_label),
                    });
                }
            }
            None => {
                first.insert(text_key(&r.text), kept.len());
                mapping.insert(r.record_id.clone(), r.record_id.clone());
                kept.push(r.clone());
            }
        }
    }
    Dedup {
        corpus: Corpus {
            records: kept,
            provenance: c.provenance.clone(),
        },
        mapping,
        conflicts,
    }
}

/// Number of test records for a split: `n * fraction` rounded half to even.
pub fn test_count(n: usize, test_fraction: f64) -> usize {
    (n as f64 * test_fraction).round_ties_even() as usize
}

/// Assigns train/test labels with a seeded shuffle.
pub fn split(c: &Corpus, test_fraction: f64, seed: u64) -> Result<Corpus, CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::FractionOutOfRange(test_fraction));
    }
    let n = c.len();
    let n_test = test_count(n, test_fraction);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test: HashSet<usize> = order.into_iter().take(n_test).collect();
    let records = c
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| SurveyRecord {
            split: Some(if test.contains(&i) {
                Split::Test
            } else {
                Split::Train
            }),
            ..r.clone()
        })
        .collect();
    Ok(Corpus {
        records,
        provenance: c.provenance.clone(),
    })
}
