//! Campaign configuration: which annotator judges which tuples.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use bwsq_core::corpus::{self, Corpus, Format};
use bwsq_core::design::Design;
use bwsq_core::TupleId;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// On-disk campaign description. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignFile {
    #[serde(default)]
    pub name: Option<String>,
    pub design: PathBuf,
    pub corpus: PathBuf,
    /// Annotator shorthand to the ordered tuple ids they judge.
    pub annotators: BTreeMap<String, Vec<TupleId>>,
}

impl CampaignFile {
    pub fn read(path: &Path) -> Result<Self, ServiceError> {
        let bytes = std::fs::read(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut cf: CampaignFile = serde_json::from_slice(&bytes)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cf.design.is_relative() {
            cf.design = base.join(&cf.design);
        }
        if cf.corpus.is_relative() {
            cf.corpus = base.join(&cf.corpus);
        }
        Ok(cf)
    }

    pub fn load(&self) -> Result<Campaign, ServiceError> {
        let design = Design::load(&self.design).map_err(|e| ServiceError::Config(e.to_string()))?;
        let format = Format::from_path(&self.corpus).unwrap_or(Format::Csv);
        let corpus = corpus::ingest(&self.corpus, format).map_err(|e| ServiceError::Config(e.to_string()))?;
        Campaign::new(self.name.clone(), design, &corpus, self.annotators.clone())
    }
}

/// A tuple ready to show: member texts in the design's stored order.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleTexts {
    pub tuple_id: TupleId,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Campaign {
    pub name: Option<String>,
    pub tuples: HashMap<TupleId, TupleTexts>,
    pub annotators: BTreeMap<String, Vec<TupleId>>,
}

impl Campaign {
    pub fn new(
        name: Option<String>,
        design: Design,
        corpus: &Corpus,
        annotators: BTreeMap<String, Vec<TupleId>>,
    ) -> Result<Self, ServiceError> {
        let index = corpus.index();
        let mut tuples = HashMap::new();
        for (annotator, ids) in &annotators {
            if annotator.trim().is_empty() || annotator.contains(':') {
                return Err(ServiceError::Config(format!("invalid annotator id {annotator:?}")));
            }
            let mut seen = std::collections::HashSet::new();
            for id in ids {
                if !seen.insert(id) {
                    return Err(ServiceError::Config(format!("{annotator}: tuple {id} listed twice")));
                }
                if tuples.contains_key(id) {
                    continue;
                }
                let t = design
                    .tuple(id)
                    .ok_or_else(|| ServiceError::Config(format!("{annotator}: unknown tuple {id}")))?;
                let texts = t
                    .member_ids
                    .iter()
                    .map(|m| {
                        index
                            .get(m)
                            .map(|r| r.text.clone())
                            .ok_or_else(|| ServiceError::Config(format!("tuple {id}: record {m} not in corpus")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                tuples.insert(id.clone(), TupleTexts { tuple_id: id.clone(), texts });
            }
        }
        Ok(Self {
            name,
            tuples,
            annotators,
        })
    }

    pub fn total(&self) -> usize {
        self.annotators.values().map(Vec::len).sum()
    }

    pub fn is_assigned(&self, annotator: &str, tuple: &TupleId) -> bool {
        self.annotators
            .get(annotator)
            .is_some_and(|ids| ids.contains(tuple))
    }
}
