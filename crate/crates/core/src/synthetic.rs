//! Seeded synthetic survey corpora with planted intensities and quantifier phrases.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SurveyRecord};
use crate::labels::FrequencyClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_records: usize,
    pub n_species: usize,
    pub n_offices: usize,
    /// Probability that a record reports absence or extinction.
    pub absent_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_records: 1000,
            n_species: 8,
            n_offices: 119,
            absent_rate: 0.15,
            seed: 0,
        }
    }
}

/// Quantifier phrases per class. Every class uses its own tokens.
pub fn quantifier_phrases(class: FrequencyClass) -> &'static [&'static str] {
    match class {
        FrequencyClass::Extinct => &["ausgestorben", "seit langem verschwunden"],
        FrequencyClass::Absent => &["fehlt", "kommt nirgends vor"],
        FrequencyClass::VeryRare => &["nur vereinzelt", "ganz einzeln"],
        FrequencyClass::Rare => &["selten", "spärlich"],
        FrequencyClass::CommonToRare => &["zerstreut", "stellenweise"],
        FrequencyClass::Common => &["häufig", "regelmäßig"],
        FrequencyClass::Abundant => &["massenhaft", "überall zahlreich"],
    }
}

const PLACES: [&str; 6] = [
    "im Revier",
    "in den Auwäldern",
    "am Waldrand",
    "in den Nadelholzbeständen",
    "im Bergland",
    "an den Bachufern",
];

const REMARKS: [&str; 8] = [
    "",
    " nach Auskunft der Jäger",
    " laut Revierbericht",
    " in den letzten Jahren",
    " besonders im Winter",
    " wie schon früher",
    " nach eigener Beobachtung",
    " im ganzen Bezirk",
];

const SPECIES: [&str; 8] = [
    "Auerwild", "Birkwild", "Haselwild", "Schwarzstorch", "Uhu", "Wildkatze", "Fischotter", "Biber",
];

fn species_name(i: usize) -> String {
    match SPECIES.get(i) {
        Some(s) => (*s).to_owned(),
        None => format!("Art {}", i + 1),
    }
}

/// Generates records whose text contains exactly one quantifier phrase of the
/// record's class. Present classes 1 to 5 get an intensity drawn uniformly from
/// their fifth of `[0, 1]`; absent and extinct records get an intensity below 0.01.
/// Record ids are `syn00001`, ...
pub fn generate(cfg: &SyntheticConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_species = cfg.n_species.max(1);
    let n_offices = cfg.n_offices.max(1);
    let records = (0..cfg.n_records)
        .map(|i| {
            let (class, intensity) = if rng.random_bool(cfg.absent_rate.clamp(0.0, 1.0)) {
                let c = if rng.random_bool(0.3) {
                    FrequencyClass::Extinct
                } else {
                    FrequencyClass::Absent
                };
                (c, rng.random_range(0.0..0.01))
            } else {
                let level = rng.random_range(0..5usize);
                let c = FrequencyClass::from_code(level as i64 + 1).unwrap_or(FrequencyClass::Rare);
                (c, (level as f64 + rng.random_range(0.0..1.0)) / 5.0)
            };
            let species = i % n_species;
            let phrase = quantifier_phrases(class).choose(&mut rng).copied().unwrap_or_default();
            let place = PLACES.choose(&mut rng).copied().unwrap_or_default();
            let remark = REMARKS.choose(&mut rng).copied().unwrap_or_default();
            let text = if rng.random_bool(0.5) {
                format!("{} {place} {phrase}{remark}.", species_name(species))
            } else {
                format!("{place}{remark} {phrase}, {}.", species_name(species))
            };
            let mut r = SurveyRecord::new(
                format!("syn{:05}", i + 1),
                format!("SP_{:04}", species + 1),
                format!("FO_{:03}", rng.random_range(0..n_offices) + 1),
                text,
            );
            r.multi_label = Some(class);
            r.binary_label = Some(class.presence());
            r.intensity = Some(intensity);
            r
        })
        .collect();
    Corpus::from_records(records).expect("synthetic ids are unique")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tokenize;

    #[test]
    fn deterministic_and_labeled() {
        let cfg = SyntheticConfig {
            n_records: 300,
            ..SyntheticConfig::default()
        };
        let a = generate(&cfg);
        assert_eq!(a.records(), generate(&cfg).records());
        assert_eq!(a.len(), 300);
        for r in a.iter() {
            let c = r.multi_label.unwrap();
            let t = r.intensity.unwrap();
            assert!((0.0..=1.0).contains(&t));
            if c.code() >= 1 {
                assert!(t >= (c.code() - 1) as f64 / 5.0 && t < c.code() as f64 / 5.0);
            }
            let tokens = tokenize(&r.text);
            assert!(quantifier_phrases(c)
                .iter()
                .any(|p| tokenize(p).iter().all(|pt| tokens.contains(pt))));
        }
        let other = generate(&SyntheticConfig { seed: 1, ..cfg });
        assert_ne!(a.records(), other.records());
    }

    #[test]
    fn phrase_tokens_do_not_overlap_between_classes() {
        for a in FrequencyClass::ALL {
            for b in FrequencyClass::ALL {
                if a == b {
                    continue;
                }
                let ta: Vec<String> = quantifier_phrases(a).iter().flat_map(|p| tokenize(p)).collect();
                let tb: Vec<String> = quantifier_phrases(b).iter().flat_map(|p| tokenize(p)).collect();
                assert!(ta.iter().all(|t| !tb.contains(t)), "{a:?} {b:?}");
            }
        }
    }
}
