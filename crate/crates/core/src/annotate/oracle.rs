//! Deterministic offline annotator that judges tuples by a planted per-record intensity.

use thiserror::Error;

use super::{AnnotatorId, Judgment};
use crate::corpus::Corpus;
use crate::design::{ComparisonTuple, Design};
use crate::ids::RecordId;

pub const ORACLE_NAME: &str = "mock:intensity";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("record {0} has no intensity value")]
    MissingIntensity(RecordId),
    #[error("tuple references unknown record {0}")]
    UnknownRecord(RecordId),
}

pub fn oracle_annotator() -> AnnotatorId {
    AnnotatorId::llm(ORACLE_NAME)
}

/// Picks the highest- and lowest-intensity members (1-based positions).
///
/// Equal intensities are ordered by record id so the induced order is strict.
pub fn judge_tuple(t: &ComparisonTuple, c: &Corpus) -> Result<(usize, usize), OracleError> {
    let index = c.index();
    let mut keyed = Vec::with_capacity(t.k());
    for (pos, id) in t.member_ids.iter().enumerate() {
        let rec = index
            .get(id)
            .ok_or_else(|| OracleError::UnknownRecord(id.clone()))?;
        let v = rec
            .intensity
            .ok_or_else(|| OracleError::MissingIntensity(id.clone()))?;
        keyed.push((v, id, pos + 1));
    }
    let cmp = |a: &&(f64, &RecordId, usize), b: &&(f64, &RecordId, usize)| {
        a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
    };
    let best = keyed.iter().max_by(cmp).expect("non-empty tuple").2;
    let worst = keyed.iter().min_by(cmp).expect("non-empty tuple").2;
    Ok((best, worst))
}

pub fn judge_design(d: &Design, c: &Corpus) -> Result<Vec<Judgment>, OracleError> {
    let annotator = oracle_annotator();
    d.tuples
        .iter()
        .map(|t| {
            let (best, worst) = judge_tuple(t, c)?;
            let mut j = Judgment::new_valid(t.tuple_id.clone(), annotator.clone(), best, worst);
            j.raw_response = format!("{{\"Best\": {best}, \"Worst\": {worst}}}");
            Ok(j)
        })
        .collect()
}
