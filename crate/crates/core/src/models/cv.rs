//! Seeded k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::stats::{ClassificationMetrics, MetricsBundle, RegressionMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Fold index of every item.
    pub assignment: Vec<usize>,
    pub folds: Vec<MetricsBundle>,
    pub mean: MetricsBundle,
}

/// Shuffles item indices with `seed`, then deals them round-robin into `folds` folds.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>, ModelError> {
    if folds < 2 {
        return Err(ModelError::InvalidConfig(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(ModelError::TooManyFolds { folds, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (pos, &item) in order.iter().enumerate() {
        assignment[item] = pos % folds;
    }
    Ok(assignment)
}

/// Calls `run(train_indices, test_indices)` once per fold and averages the metrics.
pub fn crossval<F>(n: usize, folds: usize, seed: u64, mut run: F) -> Result<CvResult, ModelError>
where
    F: FnMut(&[usize], &[usize]) -> Result<MetricsBundle, ModelError>,
{
    let assignment = fold_assignment(n, folds, seed)?;
    let mut results = Vec::with_capacity(folds);
    for f in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == f);
        results.push(run(&train, &test)?);
    }
    let mean = mean_bundle(&results);
    Ok(CvResult {
        assignment,
        folds: results,
        mean,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Field-wise mean over the bundles that carry each metric.
pub fn mean_bundle(bundles: &[MetricsBundle]) -> MetricsBundle {
    let cls: Vec<&ClassificationMetrics> = bundles.iter().filter_map(|b| b.classification.as_ref()).collect();
    let reg: Vec<&RegressionMetrics> = bundles.iter().filter_map(|b| b.regression.as_ref()).collect();
    let classification = (!cls.is_empty()).then(|| {
        let mut labels: Vec<String> = cls.iter().flat_map(|c| c.per_class_f1.iter().map(|(l, _)| l.clone())).collect();
        labels.sort();
        labels.dedup();
        ClassificationMetrics {
            f1_micro: mean(cls.iter().map(|c| c.f1_micro)).unwrap_or(0.0),
            f1_macro: mean(cls.iter().map(|c| c.f1_macro)).unwrap_or(0.0),
            accuracy: mean(cls.iter().map(|c| c.accuracy)).unwrap_or(0.0),
            per_class_f1: labels
                .into_iter()
                .map(|l| {
                    let v = mean(cls.iter().filter_map(|c| {
                        c.per_class_f1.iter().find(|(k, _)| *k == l).map(|(_, v)| *v)
                    }))
                    .unwrap_or(0.0);
                    (l, v)
                })
                .collect(),
        }
    });
    let regression = (!reg.is_empty()).then(|| RegressionMetrics {
        mae: mean(reg.iter().map(|r| r.mae)).unwrap_or(0.0),
        r2: mean(reg.iter().map(|r| r.r2)).unwrap_or(0.0),
        spearman: mean(reg.iter().filter_map(|r| r.spearman)),
    });
    MetricsBundle {
        classification,
        regression,
    }
}
