//! Mapping continuous scores back to frequency classes and per-species summaries.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::ids::RecordId;
use crate::labels::{FrequencyClass, Presence};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("score {score} for {record_id} is outside [0, 1]")]
    ScoreOutOfRange { record_id: RecordId, score: f64 },
    #[error("invalid bin edges: {0}")]
    InvalidEdges(String),
    #[error("species {0} not found in the corpus")]
    UnknownSpecies(String),
    #[error("no record has both a label and a score")]
    EmptyJoin,
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningPolicy {
    EqualWidth,
    Quantile,
}

/// Four interior edges splitting `[0, 1]` into classes 1 to 5.
///
/// A score equal to an edge falls into the upper bin. Classes -1 and 0 are only
/// produced through [`AbsenceFlag`]s, never from a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBinning {
    pub edges: Vec<f64>,
    pub policy: BinningPolicy,
}

pub const SCORED_CLASSES: [FrequencyClass; 5] = [
    FrequencyClass::VeryRare,
    FrequencyClass::Rare,
    FrequencyClass::CommonToRare,
    FrequencyClass::Common,
    FrequencyClass::Abundant,
];

impl Default for ClassBinning {
    fn default() -> Self {
        Self {
            edges: vec![0.2, 0.4, 0.6, 0.8],
            policy: BinningPolicy::EqualWidth,
        }
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl ClassBinning {
    pub fn new(edges: Vec<f64>, policy: BinningPolicy) -> Result<Self, ReportError> {
        if edges.len() != SCORED_CLASSES.len() - 1 {
            return Err(ReportError::InvalidEdges(format!(
                "need {} edges, got {}",
                SCORED_CLASSES.len() - 1,
                edges.len()
            )));
        }
        if edges.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(ReportError::InvalidEdges(format!("edges must lie in (0, 1): {edges:?}")));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ReportError::InvalidEdges(format!("edges must increase strictly: {edges:?}")));
        }
        Ok(Self { edges, policy })
    }

    /// Edges at the 20/40/60/80 % quantiles of `scores`.
    pub fn quantile(scores: &[f64]) -> Result<Self, ReportError> {
        if scores.is_empty() {
            return Err(ReportError::InvalidEdges("no scores to take quantiles of".into()));
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let edges = (1..SCORED_CLASSES.len())
            .map(|i| quantile(&sorted, i as f64 / SCORED_CLASSES.len() as f64))
            .collect();
        Self::new(edges, BinningPolicy::Quantile)
    }

    pub fn class_for(&self, score: f64) -> Option<FrequencyClass> {
        if !(0.0..=1.0).contains(&score) {
            return None;
        }
        Some(SCORED_CLASSES[self.edges.iter().filter(|e| **e <= score).count()])
    }
}

/// Out-of-band absence information that overrides the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbsenceFlag {
    Absent,
    Extinct,
}

impl AbsenceFlag {
    pub fn class(self) -> FrequencyClass {
        match self {
            AbsenceFlag::Absent => FrequencyClass::Absent,
            AbsenceFlag::Extinct => FrequencyClass::Extinct,
        }
    }
}

/// Flags from the corpus labels: extinct multi-class labels and absent binary labels.
pub fn flags_from_corpus(c: &Corpus) -> HashMap<RecordId, AbsenceFlag> {
    c.iter()
        .filter_map(|r| {
            let flag = match (r.multi_label, r.presence()) {
                (Some(FrequencyClass::Extinct), _) => AbsenceFlag::Extinct,
                (_, Some(Presence::Absent)) => AbsenceFlag::Absent,
                _ => return None,
            };
            Some((r.record_id.clone(), flag))
        })
        .collect()
}

pub fn bin_scores(
    scores: &[(RecordId, f64)],
    flags: &HashMap<RecordId, AbsenceFlag>,
    binning: &ClassBinning,
) -> Result<Vec<(RecordId, FrequencyClass)>, ReportError> {
    scores
        .iter()
        .map(|(id, s)| {
            let class = match flags.get(id) {
                Some(flag) => flag.class(),
                None => binning.class_for(*s).ok_or(ReportError::ScoreOutOfRange {
                    record_id: id.clone(),
                    score: *s,
                })?,
            };
            Ok((id.clone(), class))
        })
        .collect()
}

/// CSV with columns `record_id,class`.
pub fn write_bins_csv<W: Write>(rows: &[(RecordId, FrequencyClass)], w: W) -> Result<(), ReportError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["record_id", "class"])?;
    for (id, c) in rows {
        wtr.write_record([id.as_str(), &c.code().to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
    pub density: f64,
}

/// Fixed-width histogram over `[0, 1]`; the last bin is closed on the right.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<HistogramBin>, ReportError> {
    if bins == 0 {
        return Err(ReportError::NoBins);
    }
    let width = 1.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[((v * bins as f64).floor() as usize).min(bins - 1)] += 1;
    }
    let n = values.len().max(1) as f64;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            bin_left: i as f64 * width,
            bin_right: (i + 1) as f64 * width,
            count,
            density: count as f64 / (n * width),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeciesDistribution {
    pub species_id: String,
    pub n_records: usize,
    /// Records of the species without a score.
    pub n_unscored: usize,
    pub mean: Option<f64>,
    pub per_office: BTreeMap<String, Vec<f64>>,
    pub histogram: Vec<HistogramBin>,
}

pub fn species_distribution(
    c: &Corpus,
    scores: &HashMap<RecordId, f64>,
    species_id: &str,
    bins: usize,
) -> Result<SpeciesDistribution, ReportError> {
    let records: Vec<_> = c.iter().filter(|r| r.species_id == species_id).collect();
    if records.is_empty() {
        return Err(ReportError::UnknownSpecies(species_id.to_owned()));
    }
    let mut per_office: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut values = Vec::new();
    for r in &records {
        let Some(&s) = scores.get(&r.record_id) else {
            continue;
        };
        if !(0.0..=1.0).contains(&s) {
            return Err(ReportError::ScoreOutOfRange {
                record_id: r.record_id.clone(),
                score: s,
            });
        }
        per_office.entry(r.office_id.clone()).or_default().push(s);
        values.push(s);
    }
    Ok(SpeciesDistribution {
        species_id: species_id.to_owned(),
        n_records: records.len(),
        n_unscored: records.len() - values.len(),
        mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
        histogram: histogram(&values, bins)?,
        per_office,
    })
}

/// CSV with columns `bin_left,bin_right,count`.
pub fn write_histogram_csv<W: Write>(bins: &[HistogramBin], w: W) -> Result<(), ReportError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["bin_left", "bin_right", "count"])?;
    for b in bins {
        wtr.write_record([b.bin_left.to_string(), b.bin_right.to_string(), b.count.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub class: FrequencyClass,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScoreTable {
    /// Summaries in class order, only for classes present.
    pub rows: Vec<ClassSummary>,
    /// Consecutive present classes whose mean score does not increase.
    pub mean_violations: Vec<(FrequencyClass, FrequencyClass)>,
    /// Consecutive present classes whose score ranges overlap.
    pub range_overlaps: Vec<(FrequencyClass, FrequencyClass)>,
}

impl ClassScoreTable {
    pub fn is_monotone(&self) -> bool {
        self.mean_violations.is_empty()
    }
}

pub fn class_vs_score_table(
    labels: &HashMap<RecordId, FrequencyClass>,
    scores: &HashMap<RecordId, f64>,
) -> Result<ClassScoreTable, ReportError> {
    let mut by: BTreeMap<FrequencyClass, Vec<f64>> = BTreeMap::new();
    for (id, class) in labels {
        if let Some(s) = scores.get(id) {
            by.entry(*class).or_default().push(*s);
        }
    }
    if by.is_empty() {
        return Err(ReportError::EmptyJoin);
    }
    let rows: Vec<ClassSummary> = by
        .into_iter()
        .map(|(class, v)| ClassSummary {
            class,
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    let pairs = rows.windows(2);
    Ok(ClassScoreTable {
        mean_violations: pairs
            .clone()
            .filter(|w| w[1].mean <= w[0].mean)
            .map(|w| (w[0].class, w[1].class))
            .collect(),
        range_overlaps: pairs
            .filter(|w| w[0].max > w[1].min)
            .map(|w| (w[0].class, w[1].class))
            .collect(),
        rows,
    })
}

/// CSV with columns `class,count,mean,min,max`.
pub fn write_class_table_csv<W: Write>(t: &ClassScoreTable, w: W) -> Result<(), ReportError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["class", "count", "mean", "min", "max"])?;
    for r in &t.rows {
        wtr.write_record([
            r.class.code().to_string(),
            r.count.to_string(),
            r.mean.to_string(),
            r.min.to_string(),
            r.max.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
