//! Learning curves over cumulative training increments.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::Featurizer;
use super::logistic::{evaluate, train_classifier, LinearModel, LrConfig, Task};
use super::ModelError;
use crate::corpus::{self, Corpus, Split, SurveyRecord};

/// Share of labeled records held out when the corpus has no split column.
pub const CURVE_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_train: usize,
    pub f1_macro: f64,
}

/// Labeled train and test records. An existing split column is honored (records
/// without one count as training data); otherwise a seeded split is drawn.
pub fn train_test(c: &Corpus, task: Task, seed: u64) -> Result<(Vec<SurveyRecord>, Vec<SurveyRecord>), ModelError> {
    let labeled = c.filter(|r| task.label(r).is_some());
    if labeled.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let has_split = labeled.iter().any(|r| r.split.is_some());
    let split = if has_split {
        labeled
    } else {
        corpus::split(&labeled, CURVE_TEST_FRACTION, seed).map_err(|e| ModelError::InvalidConfig(e.to_string()))?
    };
    let (test, train): (Vec<SurveyRecord>, Vec<SurveyRecord>) = split
        .into_records()
        .into_iter()
        .partition(|r| r.split == Some(Split::Test));
    if test.is_empty() {
        return Err(ModelError::InvalidConfig("no test records".into()));
    }
    Ok((train, test))
}

/// Trains a classifier, or a constant predictor when the records hold a single class.
pub fn fit_or_constant(train: &[SurveyRecord], task: Task, cfg: &LrConfig) -> Result<LinearModel, ModelError> {
    let classes: BTreeSet<i64> = train.iter().filter_map(|r| task.label(r)).collect();
    match classes.len() {
        0 => Err(ModelError::EmptyCorpus),
        1 => {
            let class = *classes.first().unwrap_or(&0);
            let featurizer = Featurizer::fit(train, cfg.min_doc_freq, &cfg.exclude_tokens, cfg.lexicon.clone())?;
            Ok(LinearModel::constant(task, featurizer, class, cfg.clone()))
        }
        _ => train_classifier(train, task, cfg),
    }
}

/// Macro F1 on a fixed test split after training on growing prefixes of a seeded
/// shuffle of the training records: `step`, `2 step`, ... and finally all of them.
pub fn training_curve(c: &Corpus, task: Task, step: usize, cfg: &LrConfig) -> Result<Vec<CurvePoint>, ModelError> {
    let (mut train, test) = train_test(c, task, cfg.seed)?;
    if step == 0 {
        return Err(ModelError::InvalidConfig("step must be at least 1".into()));
    }
    if step > train.len() {
        return Err(ModelError::StepTooLarge {
            step,
            n_train: train.len(),
        });
    }
    train.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    train.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut sizes: Vec<usize> = (1..=train.len() / step).map(|i| i * step).collect();
    if sizes.last() != Some(&train.len()) {
        sizes.push(train.len());
    }
    sizes
        .into_iter()
        .map(|n| {
            let model = fit_or_constant(&train[..n], task, cfg)?;
            Ok(CurvePoint {
                n_train: n,
                f1_macro: evaluate(&model, &test, None)?.f1_macro,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::Presence;

    fn corpus(n: usize) -> Corpus {
        Corpus::from_records(
            (0..n)
                .map(|i| {
                    let p = i % 3 != 0;
                    let text = if p { format!("häufig gesehen {i}") } else { format!("fehlt ganz {i}") };
                    let mut r = SurveyRecord::new(format!("r{i:04}"), "S", "O", text);
                    r.binary_label = Some(if p { Presence::Present } else { Presence::Absent });
                    r
                })
                .collect(),
        )
        .unwrap()
    }

    fn cfg() -> LrConfig {
        LrConfig {
            lambda: Some(0.1),
            ..LrConfig::default()
        }
    }

    #[test]
    fn eight_points_for_800_training_records() {
        let curve = training_curve(&corpus(1000), Task::Binary, 100, &cfg()).unwrap();
        assert_eq!(curve.len(), 8);
        assert!(curve.windows(2).all(|w| w[0].n_train < w[1].n_train));
        assert_eq!(curve.last().unwrap().n_train, 800);
    }

    #[test]
    fn remainder_point_and_determinism() {
        let c = corpus(60);
        let a = training_curve(&c, Task::Binary, 20, &cfg()).unwrap();
        let sizes: Vec<usize> = a.iter().map(|p| p.n_train).collect();
        assert_eq!(sizes, [20, 40, 48]);
        assert_eq!(a, training_curve(&c, Task::Binary, 20, &cfg()).unwrap());
    }

    #[test]
    fn final_point_equals_direct_run() {
        let c = corpus(80);
        let curve = training_curve(&c, Task::Binary, 16, &LrConfig::default()).unwrap();
        let (train, test) = train_test(&c, Task::Binary, 0).unwrap();
        let m = train_classifier(&train, Task::Binary, &LrConfig::default()).unwrap();
        assert_eq!(curve.last().unwrap().f1_macro, evaluate(&m, &test, None).unwrap().f1_macro);
    }

    #[test]
    fn single_class_prefix() {
        let c = corpus(40);
        let curve = training_curve(&c, Task::Binary, 1, &cfg()).unwrap();
        assert_eq!(curve.len(), 32);
    }

    #[test]
    fn step_too_large() {
        assert!(matches!(
            training_curve(&corpus(10), Task::Binary, 9, &cfg()),
            Err(ModelError::StepTooLarge { step: 9, n_train: 8 })
        ));
    }
}
