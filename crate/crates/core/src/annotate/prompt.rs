//! Prompt templates for best-worst judgments and zero-shot classification.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, SurveyRecord};
use crate::design::ComparisonTuple;
use crate::ids::RecordId;

pub const BWS_SYSTEM_PROMPT: &str = "You are an expert annotator specializing in Best-Worst Scaling of German texts based on quantity information about animal occurrences.";

const BWS_USER_HEADER: &str = "Task: From the following German texts about animal occurrence, identify:\n\
Best: The text conveying the highest quantity (e.g., presence, frequency, population size)\n\
Worst: The text conveying the lowest quantity.\n";

const BWS_USER_FOOTER: &str = "JSON format for your answer:\n{ \"Best\": [Text Number],\n  \"Worst\": [Text Number]}";

pub const MULTICLASS_SYSTEM_PROMPT: &str = "You are a German native expert in text classification. Use the provided classification scheme to classify German texts based on species frequency descriptions.";

const MULTICLASS_USER_TEMPLATE: &str = "You are a classification model. Classify the given German text into one of the following categories:\n\
- Abundant (5): Species is very frequently observed or present.\n\
- Common (4): Species is commonly found in the area.\n\
- Common to Rare (3): Species is observed, but not very frequently.\n\
- Rare (2): Species is rarely seen in the area.\n\
- Very Rare (1): Species is seen only in exceptional circumstances.\n\
- Absent (0): Species is not observed in the area.\n\
- Extinct (-1): Species no longer exists in the area.\n\
Read the provided text and classify it according to this scheme.\n\
Here is the text to classify:\n";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("tuple {tuple} references unknown record {record}")]
    UnresolvedMember { tuple: String, record: RecordId },
    #[error("record {0} has empty text")]
    EmptyText(RecordId),
}

/// Renders the best-worst prompt for a list of texts in presentation order.
pub fn render_bws_prompt_texts<S: AsRef<str>>(texts: &[S]) -> Prompt {
    let mut user = String::from(BWS_USER_HEADER);
    for (i, t) in texts.iter().enumerate() {
        let _ = writeln!(user, "{}. {}", i + 1, t.as_ref());
    }
    user.push_str(BWS_USER_FOOTER);
    Prompt {
        system: BWS_SYSTEM_PROMPT.to_owned(),
        user,
    }
}

pub fn render_bws_prompt(t: &ComparisonTuple, c: &Corpus) -> Result<Prompt, PromptError> {
    let index = c.index();
    let texts = t
        .member_ids
        .iter()
        .map(|id| {
            index
                .get(id)
                .map(|r| r.text.as_str())
                .ok_or_else(|| PromptError::UnresolvedMember {
                    tuple: t.tuple_id.to_string(),
                    record: id.clone(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(render_bws_prompt_texts(&texts))
}

pub fn render_multiclass_prompt(r: &SurveyRecord) -> Result<Prompt, PromptError> {
    if r.text.trim().is_empty() {
        return Err(PromptError::EmptyText(r.record_id.clone()));
    }
    Ok(Prompt {
        system: MULTICLASS_SYSTEM_PROMPT.to_owned(),
        user: format!("{MULTICLASS_USER_TEMPLATE}{}", r.text),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::TupleId;

    fn corpus() -> Corpus {
        Corpus::from_records(
            ["A", "B", "C", "D"]
                .iter()
                .map(|t| SurveyRecord::new(format!("id{t}"), "S", "O", *t))
                .collect(),
        )
        .unwrap()
    }

    fn tuple(ids: &[&str]) -> ComparisonTuple {
        ComparisonTuple {
            tuple_id: TupleId::from("t1"),
            round: 0,
            member_ids: ids.iter().map(|s| RecordId::from(*s)).collect(),
        }
    }

    #[test]
    fn bws_prompt_lists_texts_in_order() {
        let p = render_bws_prompt(&tuple(&["idA", "idB", "idC", "idD"]), &corpus()).unwrap();
        assert!(p.user.contains("1. A\n2. B\n3. C\n4. D\n"));
        assert!(p
            .user
            .starts_with("Task: From the following German texts about animal occurrence"));
        assert!(p.user.contains(
            "Best: The text conveying the highest quantity (e.g., presence, frequency, population size)"
        ));
        assert!(p.user.ends_with("{ \"Best\": [Text Number],\n  \"Worst\": [Text Number]}"));
        assert_eq!(p.system, BWS_SYSTEM_PROMPT);
    }

    #[test]
    fn bws_prompt_is_pure() {
        let t = tuple(&["idD", "idB", "idA", "idC"]);
        assert_eq!(
            render_bws_prompt(&t, &corpus()).unwrap(),
            render_bws_prompt(&t, &corpus()).unwrap()
        );
    }

    #[test]
    fn bws_prompt_generalizes_to_three() {
        let p = render_bws_prompt(&tuple(&["idC", "idA", "idB"]), &corpus()).unwrap();
        assert!(p.user.contains("1. C\n2. A\n3. B\nJSON format"));
        assert!(!p.user.contains("\n4. "));
    }

    #[test]
    fn bws_prompt_unresolved_member() {
        let err = render_bws_prompt(&tuple(&["idA", "nope", "idB", "idC"]), &corpus()).unwrap_err();
        assert_eq!(
            err,
            PromptError::UnresolvedMember {
                tuple: "t1".into(),
                record: RecordId::from("nope")
            }
        );
    }

    #[test]
    fn multiclass_prompt() {
        let r = SurveyRecord::new("w", "SP_0001", "O", "Kommt nicht mehr vor.");
        let p = render_multiclass_prompt(&r).unwrap();
        assert!(p.user.ends_with("Here is the text to classify:\nKommt nicht mehr vor."));
        for line in [
            "- Abundant (5): Species is very frequently observed or present.",
            "- Common (4): ",
            "- Common to Rare (3): ",
            "- Rare (2): ",
            "- Very Rare (1): ",
            "- Absent (0): ",
            "- Extinct (-1): Species no longer exists in the area.",
        ] {
            assert!(p.user.contains(line), "{line}");
        }
        assert!(p.system.starts_with("You are a German native expert"));
        let empty = SurveyRecord::new("e", "S", "O", "  ");
        assert!(render_multiclass_prompt(&empty).is_err());
    }
}
