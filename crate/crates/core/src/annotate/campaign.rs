//! Resumable annotation campaigns against a chat backend.

use std::fmt::Display;
use std::future::Future;

use chrono::Utc;
use futures::stream::{self, StreamExt};
use serde::Serialize;
use thiserror::Error;

use super::client::{LlmClient, LlmError};
use super::parse::{parse_bws_response, parse_zero_shot_response};
use super::prompt::{render_bws_prompt, render_multiclass_prompt, Prompt, PromptError};
use super::store::{JsonlStore, StoreError};
use super::{AnnotatorId, Judgment, ZeroShotLabel};
use crate::corpus::Corpus;
use crate::design::Design;

/// Anything that answers a chat prompt with raw text.
pub trait ChatBackend: Sync {
    fn complete(&self, prompt: &Prompt) -> impl Future<Output = Result<String, LlmError>> + Send;
}

impl ChatBackend for LlmClient {
    fn complete(&self, prompt: &Prompt) -> impl Future<Output = Result<String, LlmError>> + Send {
        self.chat(prompt)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CampaignOptions {
    /// Re-asks after an unparseable answer, with the same prompt.
    pub max_retries: u32,
    pub parallelism: usize,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        Self {
            max_retries: 2,
            parallelism: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FailedItem {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CampaignSummary {
    /// Items sent to the backend in this run.
    pub attempted: usize,
    /// Items skipped because a valid row was already stored.
    pub skipped: usize,
    pub valid: usize,
    pub invalid: usize,
    pub failures: Vec<FailedItem>,
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("parallelism must be >= 1")]
    Parallelism,
}

enum Outcome<P> {
    Parsed { value: P, raw: String },
    Unparsed { raw: String, error: String },
    Failed { error: String },
}

async fn ask<B, P, E>(
    backend: &B,
    prompt: &Prompt,
    max_retries: u32,
    parse: impl Fn(&str) -> Result<P, E>,
) -> Outcome<P>
where
    B: ChatBackend,
    E: Display,
{
    let mut last = None;
    for _ in 0..=max_retries {
        match backend.complete(prompt).await {
            Ok(raw) => match parse(&raw) {
                Ok(value) => return Outcome::Parsed { value, raw },
                Err(e) => last = Some((raw, e.to_string())),
            },
            Err(e) => {
                return match last {
                    Some((raw, _)) => Outcome::Unparsed {
                        raw,
                        error: e.to_string(),
                    },
                    None => Outcome::Failed {
                        error: e.to_string(),
                    },
                }
            }
        }
    }
    let (raw, error) = last.expect("at least one attempt");
    Outcome::Unparsed { raw, error }
}

fn tally<P>(summary: &mut CampaignSummary, id: String, outcome: &Outcome<P>) {
    match outcome {
        Outcome::Parsed { .. } => summary.valid += 1,
        Outcome::Unparsed { error, .. } | Outcome::Failed { error } => {
            summary.invalid += 1;
            summary.failures.push(FailedItem {
                id,
                error: error.clone(),
            });
        }
    }
}

/// Collects one judgment per tuple from `backend`, persisting each row as it arrives.
///
/// Tuples that already have a valid judgment from `annotator` in `store` are skipped.
/// Unparseable answers are re-asked up to `max_retries` times and then stored as invalid.
pub async fn annotate_design<B: ChatBackend>(
    design: &Design,
    corpus: &Corpus,
    backend: &B,
    annotator: &AnnotatorId,
    store: &JsonlStore<Judgment>,
    opts: &CampaignOptions,
) -> Result<CampaignSummary, AnnotateError> {
    if opts.parallelism < 1 {
        return Err(AnnotateError::Parallelism);
    }
    let mut pending = Vec::new();
    let mut summary = CampaignSummary::default();
    for (i, t) in design.tuples.iter().enumerate() {
        let prompt = render_bws_prompt(t, corpus)?;
        if store.has_valid(&(t.tuple_id.clone(), annotator.clone())) {
            summary.skipped += 1;
        } else {
            pending.push((i, prompt));
        }
    }
    summary.attempted = pending.len();

    let mut results = stream::iter(pending)
        .map(|(i, prompt): (usize, Prompt)| async move {
            let t = &design.tuples[i];
            let k = t.k();
            let outcome = ask(backend, &prompt, opts.max_retries, |raw| {
                parse_bws_response(raw, k)
            })
            .await;
            let row = match &outcome {
                Outcome::Parsed { value, raw } => Judgment {
                    raw_response: raw.clone(),
                    ..Judgment::new_valid(
                        t.tuple_id.clone(),
                        annotator.clone(),
                        value.best,
                        value.worst,
                    )
                },
                Outcome::Unparsed { raw, error } => Judgment {
                    raw_response: raw.clone(),
                    ..Judgment::new_invalid(t.tuple_id.clone(), annotator.clone(), error.clone())
                },
                Outcome::Failed { error } => {
                    tracing::warn!(tuple = %t.tuple_id, %error, "request failed");
                    Judgment::new_invalid(t.tuple_id.clone(), annotator.clone(), error.clone())
                }
            };
            store.append(row)?;
            Ok::<_, StoreError>((t.tuple_id.to_string(), outcome))
        })
        .buffer_unordered(opts.parallelism);

    while let Some(res) = results.next().await {
        let (id, outcome) = res?;
        tally(&mut summary, id, &outcome);
    }
    drop(results);
    store.compact()?;
    Ok(summary)
}

/// Labels every record with the zero-shot classification prompt.
pub async fn annotate_zero_shot<B: ChatBackend>(
    corpus: &Corpus,
    backend: &B,
    annotator: &AnnotatorId,
    store: &JsonlStore<ZeroShotLabel>,
    opts: &CampaignOptions,
) -> Result<CampaignSummary, AnnotateError> {
    if opts.parallelism < 1 {
        return Err(AnnotateError::Parallelism);
    }
    let mut pending = Vec::new();
    let mut summary = CampaignSummary::default();
    for (i, r) in corpus.iter().enumerate() {
        let prompt = render_multiclass_prompt(r)?;
        if store.has_valid(&(r.record_id.clone(), annotator.clone())) {
            summary.skipped += 1;
        } else {
            pending.push((i, prompt));
        }
    }
    summary.attempted = pending.len();

    let mut results = stream::iter(pending)
        .map(|(i, prompt): (usize, Prompt)| async move {
            let r = &corpus.records()[i];
            let outcome = ask(backend, &prompt, opts.max_retries, parse_zero_shot_response).await;
            let (predicted_class, raw_response, error) = match &outcome {
                Outcome::Parsed { value, raw } => (Some(*value), raw.clone(), None),
                Outcome::Unparsed { raw, error } => (None, raw.clone(), Some(error.clone())),
                Outcome::Failed { error } => (None, String::new(), Some(error.clone())),
            };
            store.append(ZeroShotLabel {
                record_id: r.record_id.clone(),
                annotator: annotator.clone(),
                predicted_class,
                raw_response,
                timestamp: Utc::now(),
                error,
            })?;
            Ok::<_, StoreError>((r.record_id.to_string(), outcome))
        })
        .buffer_unordered(opts.parallelism);

    while let Some(res) = results.next().await {
        let (id, outcome) = res?;
        tally(&mut summary, id, &outcome);
    }
    drop(results);
    store.compact()?;
    Ok(summary)
}
