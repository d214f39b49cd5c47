//! Balanced Best-Worst Scaling designs.
//!
//! A design is built from `repetitions * set_size` rounds. Each round shuffles the
//! corpus and cuts it into consecutive blocks of `set_size`, so every record lands
//! in exactly one tuple per round and in exactly `repetitions * set_size` tuples
//! overall. The total number of tuples is `repetitions * n`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::ids::{RecordId, TupleId};

/// Reshuffles allowed per round before giving up on finding a duplicate-free round.
pub const MAX_ROUND_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignParams {
    /// Tuple size `k`; at least 3.
    pub set_size: usize,
    /// Repetition factor `N`; at least 1.
    pub repetitions: usize,
    pub seed: u64,
    /// Drop `n mod k` random records instead of failing on indivisible corpora.
    #[serde(default)]
    pub truncate: bool,
}

impl Default for DesignParams {
    fn default() -> Self {
        Self {
            set_size: 4,
            repetitions: 2,
            seed: 0,
            truncate: false,
        }
    }
}

impl DesignParams {
    pub fn appearances_per_record(&self) -> usize {
        self.repetitions * self.set_size
    }

    pub fn rounds(&self) -> usize {
        self.repetitions * self.set_size
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonTuple {
    pub tuple_id: TupleId,
    pub round: usize,
    /// Members in presentation order (position 1..k).
    pub member_ids: Vec<RecordId>,
}

impl ComparisonTuple {
    pub fn k(&self) -> usize {
        self.member_ids.len()
    }

    /// Member at a 1-based presentation position.
    pub fn member_at(&self, position: usize) -> Option<&RecordId> {
        position.checked_sub(1).and_then(|i| self.member_ids.get(i))
    }

    fn member_set(&self) -> Vec<&RecordId> {
        let mut v: Vec<_> = self.member_ids.iter().collect();
        v.sort();
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub set_size: usize,
    /// Generation parameters; `None` when the design was loaded from a file.
    pub params: Option<DesignParams>,
    pub tuples: Vec<ComparisonTuple>,
    /// Records removed by truncation.
    pub dropped: Vec<RecordId>,
}

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("corpus too small: {n} records, need at least {min} (2 * set size)")]
    CorpusTooSmall { n: usize, min: usize },
    #[error("corpus size {n} is not divisible by set size {k}; enable truncation to drop {} records", .n % .k)]
    NotDivisible { n: usize, k: usize },
    #[error("could not build a duplicate-free round {round} after {retries} reshuffles (seed {seed})")]
    RetriesExhausted {
        round: usize,
        retries: usize,
        seed: u64,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn round_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates a balanced design over the corpus records.
pub fn generate_design(c: &Corpus, p: DesignParams) -> Result<Design, DesignError> {
    let ids: Vec<RecordId> = c.iter().map(|r| r.record_id.clone()).collect();
    generate_design_for_ids(&ids, p)
}

pub fn generate_design_for_ids(ids: &[RecordId], p: DesignParams) -> Result<Design, DesignError> {
    let k = p.set_size;
    if k < 3 {
        return Err(DesignError::InvalidParams(format!(
            "set size must be >= 3, got {k}"
        )));
    }
    if p.repetitions < 1 {
        return Err(DesignError::InvalidParams(
            "repetitions must be >= 1".into(),
        ));
    }
    let n = ids.len();
    if n < 2 * k {
        return Err(DesignError::CorpusTooSmall { n, min: 2 * k });
    }
    let mut ids = ids.to_vec();
    let mut dropped = Vec::new();
    if n % k != 0 {
        if !p.truncate {
            return Err(DesignError::NotDivisible { n, k });
        }
        let mut shuffled = ids.clone();
        shuffled.shuffle(&mut round_rng(p.seed, u64::MAX));
        dropped = shuffled.split_off(n - n % k);
        let drop: HashSet<&RecordId> = dropped.iter().collect();
        ids.retain(|id| !drop.contains(id));
        tracing::warn!(
            dropped = dropped.len(),
            "corpus size not divisible by set size; truncating"
        );
        if ids.len() < 2 * k {
            return Err(DesignError::CorpusTooSmall {
                n: ids.len(),
                min: 2 * k,
            });
        }
    }

    let mut seen: HashSet<Vec<RecordId>> = HashSet::new();
    let mut tuples = Vec::with_capacity(p.repetitions * ids.len());
    for round in 0..p.rounds() {
        let mut rng = round_rng(p.seed, round as u64);
        let mut attempt = 0;
        let chunks = loop {
            let mut order = ids.clone();
            order.shuffle(&mut rng);
            let chunks: Vec<Vec<RecordId>> = order.chunks(k).map(<[RecordId]>::to_vec).collect();
            let collides = chunks.iter().any(|ch| {
                let mut key = ch.clone();
                key.sort();
                seen.contains(&key)
            });
            if !collides {
                break chunks;
            }
            attempt += 1;
            if attempt > MAX_ROUND_RETRIES {
                return Err(DesignError::RetriesExhausted {
                    round,
                    retries: MAX_ROUND_RETRIES,
                    seed: p.seed,
                });
            }
        };
        for members in chunks {
            let mut key = members.clone();
            key.sort();
            seen.insert(key);
            tuples.push(ComparisonTuple {
                tuple_id: TupleId::new(format!("t{:05}", tuples.len() + 1)),
                round,
                member_ids: members,
            });
        }
    }
    Ok(Design {
        set_size: k,
        params: Some(p),
        tuples,
        dropped,
    })
}

/// Diagnostic summary of a design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignReport {
    pub appearances: BTreeMap<RecordId, usize>,
    /// Expected appearances per record, when known.
    pub expected: Option<usize>,
    /// Pairs of tuples with identical member sets.
    pub duplicate_tuples: Vec<(TupleId, TupleId)>,
    /// Tuples listing the same record more than once.
    pub within_tuple_duplicates: Vec<TupleId>,
    /// Tuples whose size differs from the design's set size.
    pub wrong_size: Vec<TupleId>,
}

impl DesignReport {
    /// Histogram of appearance counts: count → number of records.
    pub fn histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for &c in self.appearances.values() {
            *h.entry(c).or_insert(0) += 1;
        }
        h
    }

    pub fn passes(&self) -> bool {
        let constant = match self.expected {
            Some(e) => self.appearances.values().all(|&c| c == e),
            None => self.histogram().len() <= 1,
        };
        constant
            && self.duplicate_tuples.is_empty()
            && self.within_tuple_duplicates.is_empty()
            && self.wrong_size.is_empty()
    }
}

pub fn verify_design(d: &Design) -> DesignReport {
    let mut appearances: BTreeMap<RecordId, usize> = BTreeMap::new();
    let mut first_by_set: HashMap<Vec<&RecordId>, &TupleId> = HashMap::new();
    let mut duplicate_tuples = Vec::new();
    let mut within_tuple_duplicates = Vec::new();
    let mut wrong_size = Vec::new();
    for t in &d.tuples {
        for id in &t.member_ids {
            *appearances.entry(id.clone()).or_insert(0) += 1;
        }
        if t.k() != d.set_size {
            wrong_size.push(t.tuple_id.clone());
        }
        let set = t.member_set();
        if set.windows(2).any(|w| w[0] == w[1]) {
            within_tuple_duplicates.push(t.tuple_id.clone());
        }
        match first_by_set.get(&set) {
            Some(first) => duplicate_tuples.push(((*first).clone(), t.tuple_id.clone())),
            None => {
                first_by_set.insert(set, &t.tuple_id);
            }
        }
    }
    DesignReport {
        appearances,
        expected: d.params.map(|p| p.appearances_per_record()),
        duplicate_tuples,
        within_tuple_duplicates,
        wrong_size,
    }
}

impl Design {
    pub fn tuple(&self, id: &TupleId) -> Option<&ComparisonTuple> {
        self.tuples.iter().find(|t| &t.tuple_id == id)
    }

    pub fn index(&self) -> HashMap<&TupleId, &ComparisonTuple> {
        self.tuples.iter().map(|t| (&t.tuple_id, t)).collect()
    }

    pub fn write_jsonl<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        for t in &self.tuples {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<(), DesignError> {
        self.write_jsonl(File::create(path)?)?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Design, DesignError> {
        let mut tuples: Vec<ComparisonTuple> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: ComparisonTuple =
                serde_json::from_str(&line).map_err(|e| DesignError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            tuples.push(t);
        }
        let set_size = tuples.first().map(ComparisonTuple::k).unwrap_or(0);
        Ok(Design {
            set_size,
            params: None,
            tuples,
            dropped: Vec::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Design, DesignError> {
        Design::read_jsonl(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SurveyRecord;

    fn ids(n: usize) -> Vec<RecordId> {
        (0..n).map(|i| RecordId::new(format!("r{i:04}"))).collect()
    }

    fn params(k: usize, reps: usize, seed: u64) -> DesignParams {
        DesignParams {
            set_size: k,
            repetitions: reps,
            seed,
            truncate: false,
        }
    }

    #[test]
    fn thousand_records_k4_n2() {
        let d = generate_design_for_ids(&ids(1000), params(4, 2, 1)).unwrap();
        assert_eq!(d.tuples.len(), 2000);
        let report = verify_design(&d);
        assert!(report.passes());
        assert_eq!(report.histogram(), BTreeMap::from([(8, 1000)]));
    }

    #[test]
    fn eight_records_k4_n1() {
        // 4 rounds x (8 / 4) tuples per round = 8 tuples; every id once per round.
        let d = generate_design_for_ids(&ids(8), params(4, 1, 3)).unwrap();
        assert_eq!(d.tuples.len(), 8);
        let report = verify_design(&d);
        assert!(report.passes(), "{report:?}");
        assert!(report.appearances.values().all(|&c| c == 4));
        for round in 0..4 {
            let mut in_round: Vec<_> = d
                .tuples
                .iter()
                .filter(|t| t.round == round)
                .flat_map(|t| t.member_ids.iter().cloned())
                .collect();
            in_round.sort();
            assert_eq!(in_round, ids(8));
        }
    }

    #[test]
    fn guards() {
        assert!(matches!(
            generate_design_for_ids(&ids(7), params(4, 2, 0)),
            Err(DesignError::CorpusTooSmall { .. })
        ));
        assert!(matches!(
            generate_design_for_ids(&ids(9), params(4, 2, 0)),
            Err(DesignError::NotDivisible { n: 9, k: 4 })
        ));
        assert!(matches!(
            generate_design_for_ids(&ids(12), params(2, 2, 0)),
            Err(DesignError::InvalidParams(_))
        ));
        assert!(matches!(
            generate_design_for_ids(&ids(12), params(4, 0, 0)),
            Err(DesignError::InvalidParams(_))
        ));
    }

    #[test]
    fn truncation_drops_remainder() {
        let mut p = params(4, 2, 5);
        p.truncate = true;
        let d = generate_design_for_ids(&ids(11), p).unwrap();
        assert_eq!(d.dropped.len(), 3);
        assert_eq!(d.tuples.len(), 16);
        let report = verify_design(&d);
        assert!(report.passes());
        for id in &d.dropped {
            assert!(!report.appearances.contains_key(id));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_design_for_ids(&ids(40), params(4, 2, 9)).unwrap();
        let b = generate_design_for_ids(&ids(40), params(4, 2, 9)).unwrap();
        let c = generate_design_for_ids(&ids(40), params(4, 2, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.tuples, c.tuples);
    }

    #[test]
    fn verify_flags_within_tuple_and_duplicate_sets() {
        let t = |id: &str, m: [&str; 4]| ComparisonTuple {
            tuple_id: TupleId::from(id),
            round: 0,
            member_ids: m.iter().map(|s| RecordId::from(*s)).collect(),
        };
        let d = Design {
            set_size: 4,
            params: None,
            tuples: vec![
                t("t1", ["a", "b", "c", "a"]),
                t("t2", ["a", "b", "c", "d"]),
                t("t3", ["d", "c", "b", "a"]),
            ],
            dropped: vec![],
        };
        let r = verify_design(&d);
        assert_eq!(r.within_tuple_duplicates, vec![TupleId::from("t1")]);
        assert_eq!(
            r.duplicate_tuples,
            vec![(TupleId::from("t2"), TupleId::from("t3"))]
        );
        assert!(!r.passes());
    }

    #[test]
    fn jsonl_round_trip() {
        let d = generate_design_for_ids(&ids(12), params(3, 1, 2)).unwrap();
        let mut buf = Vec::new();
        d.write_jsonl(&mut buf).unwrap();
        let first = String::from_utf8(buf.clone()).unwrap();
        assert!(first.starts_with("{\"tuple_id\":\"t00001\",\"round\":0,\"member_ids\":["));
        let back = Design::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back.tuples, d.tuples);
        assert_eq!(back.set_size, 3);
    }

    #[test]
    fn from_corpus() {
        let recs = (0..8)
            .map(|i| SurveyRecord::new(format!("r{i}"), "S", "O", format!("text {i}")))
            .collect();
        let c = Corpus::from_records(recs).unwrap();
        let d = generate_design(&c, params(4, 2, 0)).unwrap();
        assert_eq!(d.tuples.len(), 16);
    }
}
