//! Best/worst judgments and zero-shot labels from LLM and human annotators.

mod campaign;
mod client;
pub mod oracle;
mod parse;
mod prompt;
mod store;

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::{RecordId, TupleId};
use crate::labels::FrequencyClass;

pub use campaign::{
    annotate_design, annotate_zero_shot, AnnotateError, CampaignOptions, CampaignSummary,
    ChatBackend, FailedItem,
};
pub use client::{LlmClient, LlmEndpointConfig, LlmError, RateLimiter};
pub use parse::{parse_bws_response, parse_zero_shot_response, BwsAnswer, BwsParseError, ZeroShotParseError};
pub use prompt::{
    render_bws_prompt, render_bws_prompt_texts, render_multiclass_prompt, Prompt, PromptError,
    BWS_SYSTEM_PROMPT, MULTICLASS_SYSTEM_PROMPT,
};
pub use store::{read_jsonl, JsonlStore, Keyed, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotatorKind {
    Llm,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AnnotatorId {
    pub kind: AnnotatorKind,
    pub name: String,
}

impl AnnotatorId {
    pub fn llm(name: impl Into<String>) -> Self {
        Self {
            kind: AnnotatorKind::Llm,
            name: name.into(),
        }
    }

    pub fn human(name: impl Into<String>) -> Self {
        Self {
            kind: AnnotatorKind::Human,
            name: name.into(),
        }
    }
}

impl fmt::Display for AnnotatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            AnnotatorKind::Llm => "llm",
            AnnotatorKind::Human => "human",
        };
        write!(f, "{kind}:{}", self.name)
    }
}

impl FromStr for AnnotatorId {
    type Err = String;

    /// Parses `llm:<name>` or `human:<name>`; a bare name is taken as an LLM.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, name) = match s.split_once(':') {
            Some(("llm", name)) => (AnnotatorKind::Llm, name),
            Some(("human", name)) => (AnnotatorKind::Human, name),
            _ => (AnnotatorKind::Llm, s),
        };
        if name.trim().is_empty() {
            return Err("annotator name must not be empty".into());
        }
        Ok(Self {
            kind,
            name: name.to_owned(),
        })
    }
}

/// One annotator's best/worst pick for one tuple. Indices are 1-based positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub tuple_id: TupleId,
    pub annotator: AnnotatorId,
    pub best_index: Option<usize>,
    pub worst_index: Option<usize>,
    pub valid: bool,
    #[serde(default)]
    pub raw_response: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Judgment {
    pub fn new_valid(
        tuple_id: TupleId,
        annotator: AnnotatorId,
        best_index: usize,
        worst_index: usize,
    ) -> Self {
        Self {
            tuple_id,
            annotator,
            best_index: Some(best_index),
            worst_index: Some(worst_index),
            valid: true,
            raw_response: String::new(),
            timestamp: Utc::now(),
            error: None,
        }
    }

    pub fn new_invalid(tuple_id: TupleId, annotator: AnnotatorId, error: impl Into<String>) -> Self {
        Self {
            tuple_id,
            annotator,
            best_index: None,
            worst_index: None,
            valid: false,
            raw_response: String::new(),
            timestamp: Utc::now(),
            error: Some(error.into()),
        }
    }

    /// Best and worst picks when the judgment is valid.
    pub fn picks(&self) -> Option<(usize, usize)> {
        match (self.valid, self.best_index, self.worst_index) {
            (true, Some(b), Some(w)) => Some((b, w)),
            _ => None,
        }
    }

    /// `valid` implies distinct picks within `1..=k`.
    pub fn is_consistent(&self, k: usize) -> bool {
        if !self.valid {
            return true;
        }
        matches!(
            (self.best_index, self.worst_index),
            (Some(b), Some(w)) if b != w && (1..=k).contains(&b) && (1..=k).contains(&w)
        )
    }
}

impl Keyed for Judgment {
    type Key = (TupleId, AnnotatorId);

    fn key(&self) -> Self::Key {
        (self.tuple_id.clone(), self.annotator.clone())
    }

    fn is_valid(&self) -> bool {
        self.valid
    }
}

/// A zero-shot class prediction for one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotLabel {
    pub record_id: RecordId,
    pub annotator: AnnotatorId,
    pub predicted_class: Option<FrequencyClass>,
    #[serde(default)]
    pub raw_response: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Keyed for ZeroShotLabel {
    type Key = (RecordId, AnnotatorId);

    fn key(&self) -> Self::Key {
        (self.record_id.clone(), self.annotator.clone())
    }

    fn is_valid(&self) -> bool {
        self.predicted_class.is_some()
    }
}
