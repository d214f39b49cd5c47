//! Classification and regression metrics.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub accuracy: f64,
    /// `(class label, F1)` in the order of the class list.
    pub per_class_f1: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub r2: f64,
    /// `None` when the predictions are constant.
    pub spearman: Option<f64>,
}

/// Metrics for one evaluation run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionMetrics>,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    // precision and recall 0/0 count as 0
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Per-class, macro and micro F1 over an explicit class list.
///
/// Macro is the unweighted mean over `classes`, so a listed class that never
/// occurs contributes an F1 of 0.
pub fn f1_scores<T>(y_true: &[T], y_pred: &[T], classes: &[T]) -> Result<ClassificationMetrics, StatsError>
where
    T: Eq + Hash + ToString,
{
    if y_true.len() != y_pred.len() {
        return Err(StatsError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(StatsError::Empty);
    }
    if classes.is_empty() {
        return Err(StatsError::InvalidInput("empty class list".into()));
    }
    let pos: HashMap<&T, usize> = classes.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let lookup = |label: &T| {
        pos.get(label)
            .copied()
            .ok_or_else(|| StatsError::UnknownLabel(label.to_string()))
    };
    let mut tp = vec![0usize; classes.len()];
    let mut fp = vec![0usize; classes.len()];
    let mut fn_ = vec![0usize; classes.len()];
    let mut correct = 0;
    for (t, p) in y_true.iter().zip(y_pred) {
        let (ti, pi) = (lookup(t)?, lookup(p)?);
        if ti == pi {
            tp[ti] += 1;
            correct += 1;
        } else {
            fp[pi] += 1;
            fn_[ti] += 1;
        }
    }
    let per_class: Vec<f64> = (0..classes.len()).map(|i| f1(tp[i], fp[i], fn_[i])).collect();
    let f1_macro = per_class.iter().sum::<f64>() / classes.len() as f64;
    let f1_micro = f1(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    Ok(ClassificationMetrics {
        f1_micro,
        f1_macro,
        accuracy: correct as f64 / y_true.len() as f64,
        per_class_f1: classes
            .iter()
            .map(ToString::to_string)
            .zip(per_class)
            .collect(),
    })
}

/// Ranks starting at 1, ties get the average of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties. `None` if either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFew(x.len()));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// MAE, R² and Spearman of predictions against targets.
pub fn regression_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<RegressionMetrics, StatsError> {
    if y_true.len() != y_pred.len() {
        return Err(StatsError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.len() < 2 {
        return Err(StatsError::TooFew(y_true.len()));
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(StatsError::Undefined("R² with constant targets"));
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p).powi(2))
        .sum();
    let mae = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p).abs())
        .sum::<f64>()
        / n;
    Ok(RegressionMetrics {
        mae,
        r2: 1.0 - ss_res / ss_tot,
        spearman: spearman(y_true, y_pred)?,
    })
}
