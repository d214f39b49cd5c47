//! Best-Worst Scaling pipeline for free-text quantity descriptions.
//!
//! The crate covers the full path from survey records to evaluated models:
//!
//! - [`corpus`]: ingest, validate, deduplicate and split survey records
//! - [`design`]: balanced comparison tuples for Best-Worst Scaling
//! - [`annotate`]: prompts, response parsing, LLM campaigns and judgment storage
//! - [`scoring`]: counting scores from best/worst judgments
//! - [`stats`]: Cohen's kappa, F1, regression metrics, permutation test
//! - [`models`]: unigram features, logistic regression, kernel ridge regression
//! - [`report`]: class binning and per-species score distributions
//! - [`synthetic`]: seeded corpora with planted intensities for offline runs

pub mod annotate;
pub mod corpus;
pub mod design;
pub mod ids;
pub mod labels;
pub mod models;
pub mod report;
pub mod scoring;
pub mod stats;
pub mod synthetic;

pub use ids::{RecordId, TupleId};
pub use labels::{FrequencyClass, Presence};
