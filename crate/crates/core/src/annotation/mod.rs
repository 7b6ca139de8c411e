//! Two-stage annotation: machine coarse labels behind a consensus gate, then
//! dual human labelling with third-annotator adjudication, plus Cohen's kappa.

mod agreement;
mod consensus;
mod events;
mod kappa;
mod labeler;
mod queue;

use thiserror::Error;

pub use agreement::{compute_agreement_report, AgreementReport, Dimension};
pub use consensus::{
    aggregate_coarse, aggregate_with_policy, ConsensusPolicy, ConsensusResult, ConsensusStatus,
};
pub use events::{AnnotationQueue, QueueEvent};
pub use kappa::{cohen_kappa, kappa_from_table, KappaInput};
pub use labeler::{
    coarse_template, parse_label_response, request_model_labels, CoarseOutcome, LabelerFailure,
    LexicalStanceChat, MachineLabeler, ModelLabel, COARSE_TEMPLATE_SLOTS, COARSE_TEMPLATE_V1,
};
pub use queue::{
    record_human_label, resolve_with_third, submit_label, AnnotationRecord, QueueEntry, QueueState,
    Resolution, ResolvedBy, SampleContext, MAX_HUMAN_LABELS,
};

use serde::{Deserialize, Serialize};

use crate::corpus::Sample;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("at least two labelers are required, got {0}")]
    TooFewLabelers(usize),
    #[error("every labeler failed for sample `{sample_id}`")]
    AllLabelersFailed {
        sample_id: String,
        failures: Vec<LabelerFailure>,
    },
    #[error("consensus needs at least two labels, got {0}")]
    InsufficientLabels(usize),
    #[error("annotator `{annotator_id}` already labeled sample `{sample_id}`")]
    DuplicateAnnotator {
        sample_id: String,
        annotator_id: String,
    },
    #[error("sample `{0}` is already resolved")]
    EntryAlreadyResolved(String),
    #[error("sample `{sample_id}` is in state {state:?}")]
    WrongState { sample_id: String, state: QueueState },
    #[error("annotator `{annotator_id}` already labeled `{sample_id}` and cannot adjudicate it")]
    AnnotatorNotIndependent {
        sample_id: String,
        annotator_id: String,
    },
    #[error("record is for sample `{got}`, entry is `{expected}`")]
    SampleMismatch { expected: String, got: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("sample `{0}` is not in the queue")]
    UnknownSample(String),
    #[error("sample `{0}` is already queued")]
    AlreadyQueued(String),
    #[error("kappa input is empty")]
    EmptyInput,
    #[error("no sample has two human labels")]
    NoDualAnnotations,
    #[error("event log: {0}")]
    Log(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AnnotationError {
    /// Stable machine-readable code used by the HTTP API.
    pub fn code(&self) -> &'static str {
        match self {
            Self::TooFewLabelers(_) => "TooFewLabelers",
            Self::AllLabelersFailed { .. } => "AllLabelersFailed",
            Self::InsufficientLabels(_) => "InsufficientLabels",
            Self::DuplicateAnnotator { .. } => "DuplicateAnnotator",
            Self::EntryAlreadyResolved(_) => "EntryAlreadyResolved",
            Self::WrongState { .. } => "WrongState",
            Self::AnnotatorNotIndependent { .. } => "AnnotatorNotIndependent",
            Self::SampleMismatch { .. } => "SampleMismatch",
            Self::InvalidRecord(_) => "InvalidRecord",
            Self::UnknownSample(_) => "NotFound",
            Self::AlreadyQueued(_) => "AlreadyQueued",
            Self::EmptyInput => "EmptyInput",
            Self::NoDualAnnotations => "NoDualAnnotations",
            Self::Log(_) | Self::Io(_) => "Internal",
        }
    }
}

/// Result of the machine stage over a whole corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseRun {
    pub outcomes: Vec<CoarseOutcome>,
    pub consensus: Vec<ConsensusResult>,
    /// Samples every labeler failed on.
    pub unlabeled: Vec<String>,
}

impl CoarseRun {
    pub fn flagged(&self) -> impl Iterator<Item = &ConsensusResult> {
        self.consensus
            .iter()
            .filter(|c| c.status == ConsensusStatus::Flagged)
    }
}

/// Runs the machine stage over `samples` and returns the per-sample verdicts.
/// Samples on which only one labeler succeeded are flagged for humans.
pub fn coarse_annotate(
    samples: &[Sample],
    labelers: &[MachineLabeler],
    policy: ConsensusPolicy,
) -> Result<CoarseRun, AnnotationError> {
    let mut outcomes = Vec::new();
    let mut consensus = Vec::new();
    let mut unlabeled = Vec::new();
    for s in samples {
        match request_model_labels(s, labelers) {
            Ok(outcome) => {
                let verdict = match aggregate_with_policy(&outcome.labels, policy) {
                    Ok(v) => v,
                    Err(AnnotationError::InsufficientLabels(_)) => ConsensusResult {
                        sample_id: s.sample_id.clone(),
                        status: ConsensusStatus::Flagged,
                        final_stance: None,
                        final_topic: None,
                    },
                    Err(e) => return Err(e),
                };
                consensus.push(verdict);
                outcomes.push(outcome);
            }
            Err(AnnotationError::AllLabelersFailed { sample_id, .. }) => unlabeled.push(sample_id),
            Err(e) => return Err(e),
        }
    }
    Ok(CoarseRun {
        outcomes,
        consensus,
        unlabeled,
    })
}

/// Queue entries for every flagged sample, in sample order.
pub fn flagged_entries(samples: &[Sample], run: &CoarseRun) -> Vec<QueueEntry> {
    let by_id: std::collections::HashMap<&str, &CoarseOutcome> = run
        .outcomes
        .iter()
        .map(|o| (o.sample_id.as_str(), o))
        .collect();
    let flagged: std::collections::HashSet<&str> =
        run.flagged().map(|c| c.sample_id.as_str()).collect();
    samples
        .iter()
        .filter(|s| flagged.contains(s.sample_id.as_str()))
        .map(|s| {
            QueueEntry::new(
                s.sample_id.clone(),
                SampleContext {
                    post_text: s.post_text.clone(),
                    image_uri: s.image.uri.clone(),
                    comment_text: s.comment.text.clone(),
                },
                by_id
                    .get(s.sample_id.as_str())
                    .map(|o| o.labels.clone())
                    .unwrap_or_default(),
            )
        })
        .collect()
}
