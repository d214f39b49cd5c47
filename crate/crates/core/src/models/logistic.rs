//! L2-regularized logistic regression on unigram features, binary and one-vs-rest.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{Featurizer, QuantifierLexicon, SparseVec};
use super::lbfgs::{minimize, LbfgsOptions};
use super::ModelError;
use crate::corpus::{test_count, SurveyRecord};
use crate::stats::{f1_scores, ClassificationMetrics};

/// Regularization strengths tried when none is fixed.
pub const LAMBDA_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Presence (1) versus absence (0).
    Binary,
    /// The seven frequency classes, by code.
    Multiclass,
}

impl Task {
    pub fn label(self, r: &SurveyRecord) -> Option<i64> {
        match self {
            Task::Binary => r.presence().map(|p| p.as_i8() as i64),
            Task::Multiclass => r.multi_label.map(|c| c.code() as i64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrConfig {
    /// Fixed regularization strength; `None` selects one from [`LAMBDA_GRID`]
    /// on an inner validation split.
    pub lambda: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub min_doc_freq: usize,
    /// Weight samples by `n / (n_classes * n_class)`.
    pub class_weights: bool,
    pub exclude_tokens: Vec<String>,
    pub validation_fraction: f64,
    #[serde(skip)]
    pub lexicon: Option<QuantifierLexicon>,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            max_iter: 1000,
            tol: 1e-6,
            seed: 0,
            min_doc_freq: 1,
            class_weights: false,
            exclude_tokens: Vec::new(),
            validation_fraction: 0.2,
            lexicon: None,
        }
    }
}

fn log1p_exp(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `(1/n) [sum_i s_i * logloss_i + lambda/2 ||w||^2]` over parameters `[w..., b]`.
/// The bias is not penalized.
pub struct LogisticObjective<'a> {
    x: &'a [SparseVec],
    y: &'a [bool],
    weights: Option<&'a [f64]>,
    dim: usize,
    lambda: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(
        x: &'a [SparseVec],
        y: &'a [bool],
        weights: Option<&'a [f64]>,
        dim: usize,
        lambda: f64,
    ) -> Result<Self, ModelError> {
        if x.len() != y.len() || weights.is_some_and(|w| w.len() != x.len()) {
            return Err(ModelError::LengthMismatch(x.len(), y.len()));
        }
        if x.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ModelError::InvalidConfig(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { x, y, weights, dim, lambda })
    }

    pub fn n_params(&self) -> usize {
        self.dim + 1
    }

    pub fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (w, b) = theta.split_at(self.dim);
        let b = b[0];
        let n = self.x.len() as f64;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (i, (xi, &yi)) in self.x.iter().zip(self.y).enumerate() {
            let s = self.weights.map_or(1.0, |w| w[i]);
            let z = xi.dot_dense(w) + b;
            loss += s * if yi { log1p_exp(-z) } else { log1p_exp(z) };
            let r = s * (sigmoid(z) - if yi { 1.0 } else { 0.0 });
            for (j, v) in xi.iter() {
                grad[j] += r * v;
            }
            grad[self.dim] += r;
        }
        let mut penalty = 0.0;
        for (g, wj) in grad[..self.dim].iter_mut().zip(w) {
            *g += self.lambda * wj;
            penalty += wj * wj;
        }
        grad.iter_mut().for_each(|g| *g /= n);
        (loss + 0.5 * self.lambda * penalty) / n
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; theta.len()];
        self.value_grad(theta, &mut g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub grad_norm: f64,
    pub converged: bool,
}

/// Fits one binary logistic regression from zero initial weights.
pub fn fit_logistic(
    x: &[SparseVec],
    y: &[bool],
    sample_weights: Option<&[f64]>,
    dim: usize,
    lambda: f64,
    opts: &LbfgsOptions,
) -> Result<BinaryFit, ModelError> {
    let obj = LogisticObjective::new(x, y, sample_weights, dim, lambda)?;
    let r = minimize(|t, g| obj.value_grad(t, g), vec![0.0; obj.n_params()], opts);
    let mut weights = r.x;
    let bias = weights.pop().unwrap_or(0.0);
    Ok(BinaryFit {
        weights,
        bias,
        grad_norm: r.grad_norm,
        converged: r.converged,
    })
}

/// A fitted linear classifier with its featurizer.
///
/// With two classes and one weight row the row scores `classes[1]` against a fixed
/// score of 0 for `classes[0]`; otherwise there is one one-vs-rest row per class.
/// A single class and no rows is a constant predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub task: Task,
    pub featurizer: Featurizer,
    pub classes: Vec<i64>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub lambda: f64,
    pub config: LrConfig,
}

impl LinearModel {
    pub fn constant(task: Task, featurizer: Featurizer, class: i64, config: LrConfig) -> Self {
        Self {
            task,
            featurizer,
            classes: vec![class],
            weights: Vec::new(),
            bias: Vec::new(),
            lambda: config.lambda.unwrap_or(1.0),
            config,
        }
    }

    pub fn is_binary_form(&self) -> bool {
        self.classes.len() == 2 && self.weights.len() == 1
    }

    /// Decision score per entry of `classes`.
    pub fn scores(&self, x: &SparseVec) -> Vec<f64> {
        let rows: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| x.dot_dense(w) + b)
            .collect();
        if self.is_binary_form() {
            vec![0.0, rows[0]]
        } else if rows.is_empty() {
            vec![0.0; self.classes.len()]
        } else {
            rows
        }
    }

    pub fn predict_features(&self, x: &SparseVec) -> i64 {
        self.classes[argmax(&self.scores(x))]
    }

    pub fn predict_text(&self, text: &str) -> i64 {
        self.predict_features(&self.featurizer.transform_text(text))
    }

    pub fn predict(&self, records: &[SurveyRecord]) -> Vec<i64> {
        records.iter().map(|r| self.predict_text(&r.text)).collect()
    }

    /// Class whose weight row is `row`.
    pub fn row_class(&self, row: usize) -> i64 {
        if self.is_binary_form() {
            self.classes[1]
        } else {
            self.classes[row]
        }
    }
}

/// Index of the largest score; the first one wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

fn labeled(records: &[SurveyRecord], task: Task) -> Vec<(SurveyRecord, i64)> {
    let mut out: Vec<(SurveyRecord, i64)> = records
        .iter()
        .filter_map(|r| task.label(r).map(|l| (r.clone(), l)))
        .collect();
    let skipped = records.len() - out.len();
    if skipped > 0 {
        tracing::warn!(skipped, "records without a label for this task were skipped");
    }
    out.sort_by(|a, b| a.0.record_id.cmp(&b.0.record_id));
    out
}

fn balanced_weights(labels: &[i64]) -> Vec<f64> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(*l).or_default() += 1;
    }
    let n = labels.len() as f64;
    let k = counts.len() as f64;
    labels
        .iter()
        .map(|l| n / (k * counts[l] as f64))
        .collect()
}

fn fit_fixed(
    data: &[(SurveyRecord, i64)],
    task: Task,
    cfg: &LrConfig,
    lambda: f64,
) -> Result<LinearModel, ModelError> {
    let records: Vec<SurveyRecord> = data.iter().map(|(r, _)| r.clone()).collect();
    let labels: Vec<i64> = data.iter().map(|(_, l)| *l).collect();
    let classes: Vec<i64> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(ModelError::SingleClass(classes.first().copied()));
    }
    if task == Task::Binary && classes != [0, 1] {
        return Err(ModelError::InvalidConfig(format!(
            "binary labels must be 0/1, found {classes:?}"
        )));
    }
    let featurizer = Featurizer::fit(&records, cfg.min_doc_freq, &cfg.exclude_tokens, cfg.lexicon.clone())?;
    let x = featurizer.transform(&records);
    let dim = featurizer.dim();
    let sw = cfg.class_weights.then(|| balanced_weights(&labels));
    let opts = LbfgsOptions {
        max_iter: cfg.max_iter,
        tol: cfg.tol,
        ..LbfgsOptions::default()
    };
    let targets: Vec<i64> = match task {
        Task::Binary => vec![1],
        Task::Multiclass => classes.clone(),
    };
    let mut weights = Vec::with_capacity(targets.len());
    let mut bias = Vec::with_capacity(targets.len());
    for c in targets {
        let y: Vec<bool> = labels.iter().map(|l| *l == c).collect();
        let fit = fit_logistic(&x, &y, sw.as_deref(), dim, lambda, &opts)?;
        if !fit.converged {
            tracing::warn!(class = c, grad_norm = fit.grad_norm, "logistic regression did not converge");
        }
        weights.push(fit.weights);
        bias.push(fit.bias);
    }
    Ok(LinearModel {
        task,
        featurizer,
        classes,
        weights,
        bias,
        lambda,
        config: cfg.clone(),
    })
}

fn macro_f1_on(model: &LinearModel, data: &[(SurveyRecord, i64)]) -> f64 {
    let truth: Vec<i64> = data.iter().map(|(_, l)| *l).collect();
    let pred: Vec<i64> = data.iter().map(|(r, _)| model.predict_text(&r.text)).collect();
    let classes = union_classes(&truth, &pred);
    f1_scores(&truth, &pred, &classes).map_or(0.0, |m| m.f1_macro)
}

fn select_lambda(data: &[(SurveyRecord, i64)], task: Task, cfg: &LrConfig) -> Result<f64, ModelError> {
    let n_val = test_count(data.len(), cfg.validation_fraction);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let (val_idx, train_idx) = order.split_at(n_val.min(data.len()));
    let mut inner: Vec<(SurveyRecord, i64)> = train_idx.iter().map(|&i| data[i].clone()).collect();
    inner.sort_by(|a, b| a.0.record_id.cmp(&b.0.record_id));
    let val: Vec<(SurveyRecord, i64)> = val_idx.iter().map(|&i| data[i].clone()).collect();
    let inner_classes: BTreeSet<i64> = inner.iter().map(|(_, l)| *l).collect();
    if val.is_empty() || inner_classes.len() < 2 {
        return Ok(1.0);
    }
    let mut best = (f64::NEG_INFINITY, 1.0);
    for &lambda in &LAMBDA_GRID {
        let m = fit_fixed(&inner, task, cfg, lambda)?;
        let f = macro_f1_on(&m, &val);
        if f > best.0 {
            best = (f, lambda);
        }
    }
    Ok(best.1)
}

/// Trains a classifier for `task` on the labeled records of `train`.
///
/// Records are processed in record-id order, so the result does not depend on
/// the input order.
pub fn train_classifier(train: &[SurveyRecord], task: Task, cfg: &LrConfig) -> Result<LinearModel, ModelError> {
    let data = labeled(train, task);
    if data.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let n_classes = data.iter().map(|(_, l)| *l).collect::<BTreeSet<_>>().len();
    if n_classes < 2 {
        return Err(ModelError::SingleClass(Some(data[0].1)));
    }
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => select_lambda(&data, task, cfg)?,
    };
    fit_fixed(&data, task, cfg, lambda)
}

pub fn train_binary(train: &[SurveyRecord], cfg: &LrConfig) -> Result<LinearModel, ModelError> {
    train_classifier(train, Task::Binary, cfg)
}

pub fn train_multiclass(train: &[SurveyRecord], cfg: &LrConfig) -> Result<LinearModel, ModelError> {
    train_classifier(train, Task::Multiclass, cfg)
}

/// Sorted union of the labels in `a` and `b`.
pub fn union_classes(a: &[i64], b: &[i64]) -> Vec<i64> {
    a.iter().chain(b).copied().collect::<BTreeSet<_>>().into_iter().collect()
}

/// Metrics on the labeled records of `records`. Without an explicit class list the
/// union of true and predicted labels is used.
pub fn evaluate(
    model: &LinearModel,
    records: &[SurveyRecord],
    classes: Option<&[i64]>,
) -> Result<ClassificationMetrics, ModelError> {
    let data: Vec<(&SurveyRecord, i64)> = records
        .iter()
        .filter_map(|r| model.task.label(r).map(|l| (r, l)))
        .collect();
    if data.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let truth: Vec<i64> = data.iter().map(|(_, l)| *l).collect();
    let pred: Vec<i64> = data.iter().map(|(r, _)| model.predict_text(&r.text)).collect();
    let owned;
    let classes = match classes {
        Some(c) => c,
        None => {
            owned = union_classes(&truth, &pred);
            &owned
        }
    };
    Ok(f1_scores(&truth, &pred, classes)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeight {
    pub token: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFeatures {
    pub class: i64,
    pub features: Vec<FeatureWeight>,
}

/// The `top_n` unigrams with the largest absolute weight for every weight row.
pub fn audit_features(m: &LinearModel, top_n: usize) -> Vec<ClassFeatures> {
    let vocab = &m.featurizer.vocabulary;
    if top_n > vocab.len() {
        tracing::warn!(top_n, vocabulary = vocab.len(), "top_n exceeds the vocabulary size; truncating");
    }
    m.weights
        .iter()
        .enumerate()
        .map(|(row, w)| {
            let mut fw: Vec<FeatureWeight> = w
                .iter()
                .take(vocab.len())
                .enumerate()
                .map(|(i, &weight)| FeatureWeight {
                    token: vocab.token(i).unwrap_or_default().to_owned(),
                    weight,
                })
                .collect();
            fw.sort_by(|a, b| {
                b.weight
                    .abs()
                    .total_cmp(&a.weight.abs())
                    .then_with(|| a.token.cmp(&b.token))
            });
            fw.truncate(top_n);
            ClassFeatures {
                class: m.row_class(row),
                features: fw,
            }
        })
        .collect()
}
