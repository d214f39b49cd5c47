//! Unigram features, logistic regression, kernel ridge regression and model evaluation.

mod curve;
mod cv;
mod embeddings;
mod features;
mod krr;
pub mod lbfgs;
mod logistic;
mod regress;

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::RecordId;
use crate::stats::StatsError;

pub use curve::{fit_or_constant, train_test, training_curve, CurvePoint, CURVE_TEST_FRACTION};
pub use cv::{crossval, fold_assignment, mean_bundle, CvResult};
pub use embeddings::{ingest_embeddings, EmbeddingTable};
pub use features::{
    build_vocabulary, featurize, tokenize, Featurizer, QuantifierLexicon, SparseVec, Vocabulary,
    LEXICON_FEATURES,
};
pub use krr::{alpha_grid, gamma_grid, gram, logspace, search_space, train_krr, Kernel, KrrConfig, KrrModel};
pub use logistic::{
    argmax, audit_features, evaluate, fit_logistic, train_binary, train_classifier, train_multiclass,
    union_classes, BinaryFit, ClassFeatures, FeatureWeight, LinearModel, LogisticObjective, LrConfig,
    Task, LAMBDA_GRID,
};
pub use regress::{train_embedding_regressor, train_text_regressor, with_targets, RegressionFeatures, Regressor};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no training records")]
    EmptyCorpus,
    #[error("training data holds a single class ({0:?}); need at least two")]
    SingleClass(Option<i64>),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 training points, got {0}")]
    TooFew(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("step {step} exceeds the {n_train} training records")]
    StepTooLarge { step: usize, n_train: usize },
    #[error("{folds} folds requested for {n} items")]
    TooManyFolds { folds: usize, n: usize },
    #[error("kernel system is singular at alpha = {alpha}; use alpha > 0")]
    Singular { alpha: f64 },
    #[error("embeddings line {line}: {message}")]
    EmbeddingParse { line: u64, message: String },
    #[error("embeddings line {line}: record {record_id} has dimension {found}, expected {expected}")]
    RaggedEmbedding {
        line: u64,
        record_id: RecordId,
        expected: usize,
        found: usize,
    },
    #[error("embeddings file has no rows")]
    EmptyEmbeddings,
    #[error("no embedding for record {0}")]
    MissingEmbedding(RecordId),
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error("model artifact format {found} is not supported (expected {expected})")]
    ArtifactVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Artifact {
    Classifier(LinearModel),
    Regressor(Regressor),
}

#[derive(Serialize, Deserialize)]
struct ArtifactFile {
    format_version: u32,
    created_at: DateTime<Utc>,
    artifact: Artifact,
}

/// Writes a model as versioned JSON.
pub fn save_artifact(path: &Path, artifact: &Artifact) -> Result<(), ModelError> {
    let file = ArtifactFile {
        format_version: ARTIFACT_FORMAT_VERSION,
        created_at: Utc::now(),
        artifact: artifact.clone(),
    };
    std::fs::write(path, serde_json::to_vec(&file)?)?;
    Ok(())
}

pub fn load_artifact(path: &Path) -> Result<Artifact, ModelError> {
    let bytes = std::fs::read(path)?;
    let v: serde_json::Value = serde_json::from_slice(&bytes)?;
    let found = v.get("format_version").and_then(|x| x.as_u64()).unwrap_or(0) as u32;
    if found != ARTIFACT_FORMAT_VERSION {
        return Err(ModelError::ArtifactVersion {
            found,
            expected: ARTIFACT_FORMAT_VERSION,
        });
    }
    let file: ArtifactFile = serde_json::from_value(v)?;
    Ok(file.artifact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SurveyRecord;
    use crate::labels::Presence;

    #[test]
    fn artifact_round_trip() {
        let train: Vec<SurveyRecord> = ["viel da", "kein nachweis", "viel", "kein"]
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut r = SurveyRecord::new(format!("r{i}"), "S", "O", *t);
                r.binary_label = Some(if t.starts_with("viel") { Presence::Present } else { Presence::Absent });
                r
            })
            .collect();
        let m = train_binary(&train, &LrConfig { lambda: Some(0.1), ..LrConfig::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_artifact(&path, &Artifact::Classifier(m.clone())).unwrap();
        match load_artifact(&path).unwrap() {
            Artifact::Classifier(back) => {
                assert_eq!(back.predict(&train), m.predict(&train));
                assert_eq!(back.weights, m.weights);
            }
            other => panic!("{other:?}"),
        }
        let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        v["format_version"] = 99.into();
        std::fs::write(&path, v.to_string()).unwrap();
        assert!(matches!(load_artifact(&path), Err(ModelError::ArtifactVersion { found: 99, .. })));
    }
}
