//! Controllability, perplexity, relevance and cross-modal similarity over
//! generated replies, with pluggable scorer backends and table rendering.

pub mod backends;
pub mod metrics;
pub mod report;

pub use backends::{
    BackendConfig, Backends, ConstantJointEmbedder, HashingJointEmbedder, HashingTextEmbedder,
    JointEmbedder, KeywordClassifier, LmScorer, ScriptedClassifier, ScriptedJointEmbedder,
    ScriptedScorer, ScriptedTextEmbedder, StanceClassifier, TextEmbedder, TokenScore,
    UniformScorer,
};
pub use metrics::{
    cmss, controllability, cosine, perplexity, relevance, CmssResult, CosineResult,
    PerplexityResult,
};
pub use report::{build_report, Mark, Metric, MetricReport, MetricValues, ReportRow};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{Author, StanceLabel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("stance classifier unavailable: {0}")]
    ClassifierUnavailable(String),
    #[error("language-model scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
    #[error("image `{0}` is unreadable")]
    ImageUnreadable(String),
    #[error("item `{0}` scored zero tokens")]
    ZeroTokens(String),
    #[error("item `{0}` has a zero-length embedding")]
    ZeroEmbedding(String),
    #[error("item `{0}` has an empty generation")]
    EmptyGeneration(String),
    #[error("no items to evaluate")]
    NoItems,
    #[error("item `{sample_id}` is missing the `{tag}` tag")]
    MissingTag { sample_id: String, tag: &'static str },
    #[error("backend config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    Textual,
    Visual,
    #[serde(rename = "Multi-modal")]
    MultiModal,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Textual => "Textual",
            Modality::Visual => "Visual",
            Modality::MultiModal => "Multi-modal",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "textual" | "text" => Ok(Modality::Textual),
            "visual" | "image" => Ok(Modality::Visual),
            "multimodal" => Ok(Modality::MultiModal),
            _ => Err(format!("unknown modality `{s}`")),
        }
    }
}

/// One generated reply to score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<Modality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Author>,
    pub requested_stance: StanceLabel,
    pub generated: String,
    pub reference: String,
    /// Parent post image.
    pub image: String,
}

/// Per-item metric values, the unit that reports aggregate over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub sample_id: String,
    pub model: Option<String>,
    pub modality: Option<Modality>,
    pub target: Option<Author>,
    pub stance_matched: bool,
    pub perplexity: f64,
    pub relevance: f64,
    pub cmss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n: usize,
    pub controllability: f64,
    pub perplexity: f64,
    pub perplexity_token_weighted: f64,
    pub relevance: f64,
    pub cmss: f64,
    pub cmss_truncated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub summary: EvalSummary,
    pub items: Vec<ItemScores>,
}

/// Scores every item with all four metrics.
pub fn evaluate(items: &[EvalItem], backends: &Backends) -> Result<EvalRun, EvalError> {
    let (controllability, matched) =
        metrics::controllability_detail(items, backends.classifier.as_deref())?;
    let ppl = perplexity(items, backends.scorer.as_deref())?;
    let rel = relevance(items, backends.embedder.as_deref())?;
    let cm = cmss(items, backends.joint.as_deref())?;
    let scores = items
        .iter()
        .enumerate()
        .map(|(i, it)| ItemScores {
            sample_id: it.sample_id.clone(),
            model: it.model.clone(),
            modality: it.modality,
            target: it.target,
            stance_matched: matched[i],
            perplexity: ppl.per_item[i],
            relevance: rel.per_item[i],
            cmss: cm.cosine.per_item[i],
        })
        .collect();
    Ok(EvalRun {
        summary: EvalSummary {
            n: items.len(),
            controllability,
            perplexity: ppl.mean,
            perplexity_token_weighted: ppl.token_weighted,
            relevance: rel.mean,
            cmss: cm.cosine.mean,
            cmss_truncated: cm.truncated,
        },
        items: scores,
    })
}
