//! Score regression on unigram or embedding features.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::embeddings::EmbeddingTable;
use super::features::{Featurizer, QuantifierLexicon, SparseVec};
use super::krr::{train_krr, KrrConfig, KrrModel};
use super::ModelError;
use crate::corpus::SurveyRecord;
use crate::ids::RecordId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RegressionFeatures {
    Unigrams { featurizer: Featurizer },
    /// Vectors are looked up in an external table at prediction time.
    Embeddings { source: String, dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub features: RegressionFeatures,
    pub model: KrrModel,
    pub config: KrrConfig,
}

/// Records of `records` that have a target, with the target values.
pub fn with_targets<'a>(
    records: &'a [SurveyRecord],
    targets: &HashMap<RecordId, f64>,
) -> (Vec<&'a SurveyRecord>, Vec<f64>) {
    let pairs: Vec<(&SurveyRecord, f64)> = records
        .iter()
        .filter_map(|r| targets.get(&r.record_id).map(|y| (r, *y)))
        .collect();
    let skipped = records.len() - pairs.len();
    if skipped > 0 {
        tracing::warn!(skipped, "records without a target score were skipped");
    }
    pairs.into_iter().unzip()
}

pub fn train_text_regressor(
    train: &[SurveyRecord],
    targets: &HashMap<RecordId, f64>,
    min_doc_freq: usize,
    lexicon: Option<QuantifierLexicon>,
    cfg: &KrrConfig,
) -> Result<Regressor, ModelError> {
    let (records, y) = with_targets(train, targets);
    let records: Vec<SurveyRecord> = records.into_iter().cloned().collect();
    let featurizer = Featurizer::fit(&records, min_doc_freq, &[], lexicon)?;
    let x = featurizer.transform(&records);
    Ok(Regressor {
        model: train_krr(&x, &y, cfg)?,
        features: RegressionFeatures::Unigrams { featurizer },
        config: cfg.clone(),
    })
}

pub fn train_embedding_regressor(
    train: &[SurveyRecord],
    targets: &HashMap<RecordId, f64>,
    table: &EmbeddingTable,
    cfg: &KrrConfig,
) -> Result<Regressor, ModelError> {
    let (records, y) = with_targets(train, targets);
    let ids: Vec<RecordId> = records.iter().map(|r| r.record_id.clone()).collect();
    let x = table.features(&ids)?;
    Ok(Regressor {
        model: train_krr(&x, &y, cfg)?,
        features: RegressionFeatures::Embeddings {
            source: table.source.clone(),
            dim: table.dim,
        },
        config: cfg.clone(),
    })
}

impl Regressor {
    pub fn featurize(&self, records: &[SurveyRecord], table: Option<&EmbeddingTable>) -> Result<Vec<SparseVec>, ModelError> {
        match &self.features {
            RegressionFeatures::Unigrams { featurizer } => Ok(featurizer.transform(records)),
            RegressionFeatures::Embeddings { dim, .. } => {
                let table = table.ok_or_else(|| ModelError::InvalidConfig("this model needs an embeddings file".into()))?;
                if table.dim != *dim {
                    return Err(ModelError::InvalidConfig(format!(
                        "embedding dimension {} does not match the model's {dim}",
                        table.dim
                    )));
                }
                let ids: Vec<RecordId> = records.iter().map(|r| r.record_id.clone()).collect();
                table.features(&ids)
            }
        }
    }

    pub fn predict(&self, records: &[SurveyRecord], table: Option<&EmbeddingTable>) -> Result<Vec<f64>, ModelError> {
        Ok(self.model.predict(&self.featurize(records, table)?))
    }
}
