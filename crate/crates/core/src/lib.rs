//! Toolkit for stance-driven multimodal comment generation.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`corpus`]: cleaning, filtering and image expansion of raw post/comment dumps.
//! * [`annotation`]: machine coarse labelling, the human adjudication queue and
//!   Cohen's kappa.
//! * [`sdmg`]: the cross-modal fusion mechanism (prompted visual input, text CLS
//!   encoding, task-sensitive attention and fusion) with analytic gradients.
//! * [`generation`]: instruction templating, grouped dataset splitting,
//!   fine-tuning configuration and generation backends.
//! * [`eval`]: controllability, perplexity, relevance and cross-modal similarity
//!   metrics plus table rendering.
//! * [`run`]: the offline end-to-end driver and its replay manifest.

pub mod annotation;
pub mod chat;
pub mod corpus;
pub mod digest;
pub mod eval;
pub mod generation;
pub mod jsonl;
pub mod labels;
pub mod run;
pub mod sdmg;
pub mod template;

pub use labels::{Author, StanceLabel, StyleCategory, TopicCategory};
