//! Counting-based Best-Worst scores.
//!
//! For each text the raw score is `(#best - #worst) / #overall`, where `#overall`
//! counts the text's appearances in valid judgments. Raw scores lie in `[-1, 1]` and
//! are mapped to `[0, 1]` by `(raw + 1) / 2`. With `J` appearances the raw score is
//! one of the `2J + 1` grid values `{-J..J} / J`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{AnnotatorId, Judgment};
use crate::corpus::Corpus;
use crate::design::Design;
use crate::ids::{RecordId, TupleId};
use crate::labels::Presence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub record_id: RecordId,
    pub n_best: u32,
    pub n_worst: u32,
    pub n_overall: u32,
    pub raw_score: f64,
    pub norm_score: f64,
}

impl ScoreRecord {
    pub fn from_counts(
        record_id: RecordId,
        n_best: u32,
        n_worst: u32,
        n_overall: u32,
    ) -> Result<Self, ScoringError> {
        if n_overall == 0 || n_best + n_worst > n_overall {
            return Err(ScoringError::InvalidCounts {
                record_id,
                n_best,
                n_worst,
                n_overall,
            });
        }
        let raw_score = (n_best as f64 - n_worst as f64) / n_overall as f64;
        Ok(Self {
            record_id,
            n_best,
            n_worst,
            n_overall,
            raw_score,
            norm_score: normalize(raw_score),
        })
    }
}

/// Affine map from `[-1, 1]` onto `[0, 1]`.
pub fn normalize(raw: f64) -> f64 {
    (raw + 1.0) / 2.0
}

/// All raw scores attainable with `j` appearances, ascending.
pub fn raw_grid(j: u32) -> Vec<f64> {
    let j = j as i64;
    (-j..=j).map(|v| v as f64 / j as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scores {
    /// One row per scored record, sorted by record id.
    pub records: Vec<ScoreRecord>,
    /// Design members without any valid judgment.
    pub unscored: Vec<RecordId>,
}

impl Scores {
    pub fn get(&self, id: &RecordId) -> Option<&ScoreRecord> {
        self.records
            .binary_search_by(|r| r.record_id.cmp(id))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn norm_by_id(&self) -> HashMap<RecordId, f64> {
        self.records
            .iter()
            .map(|r| (r.record_id.clone(), r.norm_score))
            .collect()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("judgment references unknown tuple {0}")]
    UnknownTuple(TupleId),
    #[error("judgment for tuple {tuple} has index outside 1..={k} or a tie")]
    InvalidIndex { tuple: TupleId, k: usize },
    #[error("duplicate judgment for tuple {tuple} by {annotator}")]
    DuplicateJudgment {
        tuple: TupleId,
        annotator: AnnotatorId,
    },
    #[error("judgments from several annotators ({0:?}); score per annotator or pool explicitly")]
    MixedAnnotators(Vec<String>),
    #[error("invalid counts for {record_id}: best {n_best}, worst {n_worst}, overall {n_overall}")]
    InvalidCounts {
        record_id: RecordId,
        n_best: u32,
        n_worst: u32,
        n_overall: u32,
    },
    #[error("csv error: {0}")]
    Csv(String),
}

/// Scores judgments from a single annotator.
pub fn score(judgments: &[Judgment], d: &Design) -> Result<Scores, ScoringError> {
    let annotators: BTreeSet<&AnnotatorId> = judgments.iter().map(|j| &j.annotator).collect();
    if annotators.len() > 1 {
        return Err(ScoringError::MixedAnnotators(
            annotators.iter().map(|a| a.to_string()).collect(),
        ));
    }
    score_pooled(judgments, d)
}

/// Scores the union of judgments from any number of annotators by summing counts.
pub fn score_pooled(judgments: &[Judgment], d: &Design) -> Result<Scores, ScoringError> {
    let tuples = d.index();
    let mut counts: BTreeMap<RecordId, (u32, u32, u32)> = BTreeMap::new();
    let mut seen: HashSet<(&TupleId, &AnnotatorId)> = HashSet::new();
    for j in judgments {
        let t = tuples
            .get(&j.tuple_id)
            .ok_or_else(|| ScoringError::UnknownTuple(j.tuple_id.clone()))?;
        if !seen.insert((&j.tuple_id, &j.annotator)) {
            return Err(ScoringError::DuplicateJudgment {
                tuple: j.tuple_id.clone(),
                annotator: j.annotator.clone(),
            });
        }
        let Some((best, worst)) = j.picks() else {
            continue;
        };
        if !j.is_consistent(t.k()) {
            return Err(ScoringError::InvalidIndex {
                tuple: j.tuple_id.clone(),
                k: t.k(),
            });
        }
        for (pos, id) in t.member_ids.iter().enumerate() {
            let c = counts.entry(id.clone()).or_insert((0, 0, 0));
            c.2 += 1;
            if pos + 1 == best {
                c.0 += 1;
            }
            if pos + 1 == worst {
                c.1 += 1;
            }
        }
    }
    let records = counts
        .into_iter()
        .map(|(id, (b, w, o))| ScoreRecord::from_counts(id, b, w, o))
        .collect::<Result<Vec<_>, _>>()?;
    let scored: HashSet<&RecordId> = records.iter().map(|r| &r.record_id).collect();
    let unscored: BTreeSet<RecordId> = d
        .tuples
        .iter()
        .flat_map(|t| t.member_ids.iter())
        .filter(|id| !scored.contains(id))
        .cloned()
        .collect();
    Ok(Scores {
        records,
        unscored: unscored.into_iter().collect(),
    })
}

/// Scores each annotator's judgments separately.
pub fn score_by_annotator(
    judgments: &[Judgment],
    d: &Design,
) -> Result<BTreeMap<AnnotatorId, Scores>, ScoringError> {
    let mut groups: BTreeMap<AnnotatorId, Vec<Judgment>> = BTreeMap::new();
    for j in judgments {
        groups.entry(j.annotator.clone()).or_default().push(j.clone());
    }
    groups
        .into_iter()
        .map(|(a, js)| score_pooled(&js, d).map(|s| (a, s)))
        .collect()
}

/// Record ids by descending normalized score; ties by ascending record id.
pub fn rank(scores: &[ScoreRecord]) -> Vec<RecordId> {
    let mut v: Vec<&ScoreRecord> = scores.iter().collect();
    v.sort_by(|a, b| {
        b.norm_score
            .total_cmp(&a.norm_score)
            .then_with(|| a.record_id.cmp(&b.record_id))
    });
    v.into_iter().map(|r| r.record_id.clone()).collect()
}

/// Conventional score for records labelled absent, which are kept out of the BWS sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImputedScore {
    pub record_id: RecordId,
    pub norm_score: f64,
    pub imputed: bool,
}

/// Assigns `0.0` (flagged as imputed) to absent records that carry no counted score.
pub fn impute_absent(c: &Corpus, scores: &Scores) -> Vec<ImputedScore> {
    c.iter()
        .filter(|r| r.presence() == Some(Presence::Absent) && scores.get(&r.record_id).is_none())
        .map(|r| ImputedScore {
            record_id: r.record_id.clone(),
            norm_score: 0.0,
            imputed: true,
        })
        .collect()
}

pub fn write_csv<W: Write>(scores: &[ScoreRecord], w: W) -> Result<(), ScoringError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in scores {
        wtr.serialize(r)
            .map_err(|e| ScoringError::Csv(e.to_string()))?;
    }
    wtr.flush().map_err(|e| ScoringError::Csv(e.to_string()))
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<ScoreRecord>, ScoringError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(|e| ScoringError::Csv(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{generate_design_for_ids, ComparisonTuple, DesignParams};

    fn counts(b: u32, w: u32, o: u32) -> ScoreRecord {
        ScoreRecord::from_counts("x".into(), b, w, o).unwrap()
    }

    #[test]
    fn counting_examples() {
        let s = counts(8, 0, 8);
        assert_eq!((s.raw_score, s.norm_score), (1.0, 1.0));
        let s = counts(0, 0, 8);
        assert_eq!((s.raw_score, s.norm_score), (0.0, 0.5));
        let s = counts(3, 1, 8);
        assert_eq!((s.raw_score, s.norm_score), (0.25, 0.625));
        let s = counts(0, 7, 8);
        assert_eq!((s.raw_score, s.norm_score), (-0.875, 0.0625));
        assert_eq!(format!("{:.2}", s.norm_score), "0.06");
    }

    #[test]
    fn invalid_counts() {
        assert!(ScoreRecord::from_counts("x".into(), 5, 4, 8).is_err());
        assert!(ScoreRecord::from_counts("x".into(), 0, 0, 0).is_err());
    }

    #[test]
    fn grid_has_17_values_for_8() {
        let g = raw_grid(8);
        assert_eq!(g.len(), 17);
        assert_eq!(g[0], -1.0);
        assert_eq!(g[16], 1.0);
        for b in 0..=8u32 {
            for w in 0..=(8 - b) {
                let s = counts(b, w, 8);
                assert!(g.contains(&s.raw_score));
            }
        }
    }

    #[test]
    fn rank_orders_and_breaks_ties() {
        let mk = |id: &str, norm: f64| ScoreRecord {
            record_id: id.into(),
            n_best: 0,
            n_worst: 0,
            n_overall: 1,
            raw_score: 2.0 * norm - 1.0,
            norm_score: norm,
        };
        assert_eq!(rank(&[mk("B", 0.1), mk("A", 0.9)]), vec![RecordId::from("A"), "B".into()]);
        assert_eq!(rank(&[mk("B", 0.5), mk("A", 0.5)]), vec![RecordId::from("A"), "B".into()]);
    }

    fn tuple(id: &str, members: [&str; 4]) -> ComparisonTuple {
        ComparisonTuple {
            tuple_id: id.into(),
            round: 0,
            member_ids: members.iter().map(|m| RecordId::from(*m)).collect(),
        }
    }

    #[test]
    fn invalid_judgments_reduce_overall() {
        let d = Design {
            set_size: 4,
            params: None,
            tuples: vec![tuple("t1", ["a", "b", "c", "d"]), tuple("t2", ["a", "b", "c", "e"])],
            dropped: vec![],
        };
        let a = AnnotatorId::llm("m");
        let js = vec![
            Judgment::new_valid("t1".into(), a.clone(), 1, 4),
            Judgment::new_invalid("t2".into(), a.clone(), "garbage"),
        ];
        let s = score(&js, &d).unwrap();
        assert_eq!(s.records.len(), 4);
        assert_eq!(s.unscored, vec![RecordId::from("e")]);
        let ra = s.get(&"a".into()).unwrap();
        assert_eq!((ra.n_best, ra.n_worst, ra.n_overall), (1, 0, 1));
    }

    #[test]
    fn errors() {
        let d = Design {
            set_size: 4,
            params: None,
            tuples: vec![tuple("t1", ["a", "b", "c", "d"])],
            dropped: vec![],
        };
        let unknown = vec![Judgment::new_valid("t9".into(), AnnotatorId::llm("m"), 1, 2)];
        assert_eq!(score(&unknown, &d), Err(ScoringError::UnknownTuple("t9".into())));
        let mixed = vec![
            Judgment::new_valid("t1".into(), AnnotatorId::llm("m"), 1, 2),
            Judgment::new_valid("t1".into(), AnnotatorId::llm("n"), 1, 2),
        ];
        assert!(matches!(score(&mixed, &d), Err(ScoringError::MixedAnnotators(_))));
        let pooled = score_pooled(&mixed, &d).unwrap();
        assert_eq!(pooled.get(&"a".into()).unwrap().n_overall, 2);
        let by = score_by_annotator(&mixed, &d).unwrap();
        assert_eq!(by.len(), 2);
        let out_of_range = vec![Judgment::new_valid("t1".into(), AnnotatorId::llm("m"), 5, 2)];
        assert!(matches!(score(&out_of_range, &d), Err(ScoringError::InvalidIndex { .. })));
    }

    #[test]
    fn conservation_on_random_design() {
        use rand::{Rng, SeedableRng};
        let ids: Vec<RecordId> = (0..40).map(|i| RecordId::new(format!("r{i:02}"))).collect();
        let d = generate_design_for_ids(&ids, DesignParams::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = AnnotatorId::llm("rand");
        let js: Vec<Judgment> = d
            .tuples
            .iter()
            .map(|t| {
                let b = rng.random_range(1..=4);
                let mut w = rng.random_range(1..=3);
                if w >= b {
                    w += 1;
                }
                Judgment::new_valid(t.tuple_id.clone(), a.clone(), b, w)
            })
            .collect();
        let s = score(&js, &d).unwrap();
        let net: i64 = s.records.iter().map(|r| r.n_best as i64 - r.n_worst as i64).sum();
        assert_eq!(net, 0);
        let overall: u32 = s.records.iter().map(|r| r.n_overall).sum();
        assert_eq!(overall as usize, 4 * js.len());
        assert!(s.records.iter().all(|r| r.n_overall == 8));
    }

    #[test]
    fn csv_keeps_full_precision() {
        let rows = vec![counts(0, 7, 8), counts(1, 0, 3)];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("record_id,n_best,n_worst,n_overall,raw_score,norm_score\n"));
        assert!(text.contains("-0.875,0.0625"));
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);
    }
}
