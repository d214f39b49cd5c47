//! Cohen's kappa and best/worst agreement between two annotators.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;
use std::io::Write;

use serde::Serialize;

use super::StatsError;
use crate::annotate::{AnnotatorId, Judgment};
use crate::ids::TupleId;

/// Chance-corrected agreement `(p_o - p_e) / (1 - p_e)`.
///
/// `p_e` comes from the product of both annotators' marginal label distributions.
/// When `p_e = 1` (both annotators always use the same single label) the result is 1.
pub fn cohen_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = a.len() as u128;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as u128;
    let mut marg: HashMap<&T, (u128, u128)> = HashMap::new();
    for x in a {
        marg.entry(x).or_default().0 += 1;
    }
    for y in b {
        marg.entry(y).or_default().1 += 1;
    }
    // Scaled by n^2: p_o -> n * agree, p_e -> sum of count products.
    let chance: u128 = marg.values().map(|(ca, cb)| ca * cb).sum();
    let total = n * n;
    if chance == total {
        return if agree == n {
            Ok(1.0)
        } else {
            Err(StatsError::Undefined("kappa with p_e = 1 and p_o < 1"))
        };
    }
    Ok((n as f64 * agree as f64 - chance as f64) / (total as f64 - chance as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub annotator_a: AnnotatorId,
    pub annotator_b: AnnotatorId,
    pub n_items: usize,
    pub kappa_best: f64,
    pub kappa_worst: f64,
    /// Kappa over the joint `(best, worst)` pair as one categorical label.
    pub kappa_both: f64,
}

fn valid_picks(js: &[Judgment]) -> BTreeMap<&TupleId, (usize, usize)> {
    js.iter()
        .filter_map(|j| j.picks().map(|p| (&j.tuple_id, p)))
        .collect()
}

/// Agreement over tuples that both annotators judged validly.
pub fn bws_agreement(j_a: &[Judgment], j_b: &[Judgment]) -> Result<AgreementReport, StatsError> {
    let pa = valid_picks(j_a);
    let pb = valid_picks(j_b);
    let pairs: Vec<((usize, usize), (usize, usize))> = pa
        .iter()
        .filter_map(|(t, a)| pb.get(t).map(|b| (*a, *b)))
        .collect();
    if pairs.is_empty() {
        return Err(StatsError::EmptyIntersection);
    }
    let best_a: Vec<usize> = pairs.iter().map(|(a, _)| a.0).collect();
    let best_b: Vec<usize> = pairs.iter().map(|(_, b)| b.0).collect();
    let worst_a: Vec<usize> = pairs.iter().map(|(a, _)| a.1).collect();
    let worst_b: Vec<usize> = pairs.iter().map(|(_, b)| b.1).collect();
    let both_a: Vec<(usize, usize)> = pairs.iter().map(|(a, _)| *a).collect();
    let both_b: Vec<(usize, usize)> = pairs.iter().map(|(_, b)| *b).collect();
    let name = |js: &[Judgment]| {
        js.first()
            .map(|j| j.annotator.clone())
            .unwrap_or_else(|| AnnotatorId::llm("?"))
    };
    Ok(AgreementReport {
        annotator_a: name(j_a),
        annotator_b: name(j_b),
        n_items: pairs.len(),
        kappa_best: cohen_kappa(&best_a, &best_b)?,
        kappa_worst: cohen_kappa(&worst_a, &worst_b)?,
        kappa_both: cohen_kappa(&both_a, &both_b)?,
    })
}

/// Agreement for every annotator pair that shares at least one validly judged tuple.
pub fn agreement_matrix(judgments: &[Judgment]) -> Vec<AgreementReport> {
    let mut by: BTreeMap<&AnnotatorId, Vec<Judgment>> = BTreeMap::new();
    for j in judgments {
        by.entry(&j.annotator).or_default().push(j.clone());
    }
    let groups: Vec<_> = by.into_iter().collect();
    let mut out = Vec::new();
    for (i, (_, a)) in groups.iter().enumerate() {
        for (_, b) in &groups[i + 1..] {
            if let Ok(r) = bws_agreement(a, b) {
                out.push(r);
            }
        }
    }
    out
}

/// CSV with one row per annotator pair: `annotator_a,annotator_b,n_items,B,W,B+W`.
pub fn write_agreement_csv<W: Write>(rows: &[AgreementReport], w: W) -> Result<(), StatsError> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| StatsError::Io(e.to_string());
    wtr.write_record(["annotator_a", "annotator_b", "n_items", "B", "W", "B+W"])
        .map_err(io)?;
    for r in rows {
        wtr.write_record([
            r.annotator_a.to_string(),
            r.annotator_b.to_string(),
            r.n_items.to_string(),
            r.kappa_best.to_string(),
            r.kappa_worst.to_string(),
            r.kappa_both.to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush().map_err(|e| StatsError::Io(e.to_string()))
}
