use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::labeler::ModelLabel;
use super::AnnotationError;
use crate::labels::{StanceLabel, TopicCategory};

/// How agreement between machine labelers is decided.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsensusPolicy {
    /// Every label carries the same (stance, topic) pair.
    #[default]
    Unanimity,
    /// One (stance, topic) pair holds a strict majority of the labels.
    Majority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConsensusStatus {
    /// The labelers agree under the active policy; the label is final.
    Unanimous,
    /// Inconsistent labels; the sample goes to human calibration.
    Flagged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub sample_id: String,
    pub status: ConsensusStatus,
    pub final_stance: Option<StanceLabel>,
    pub final_topic: Option<TopicCategory>,
}

pub fn aggregate_coarse(labels: &[ModelLabel]) -> Result<ConsensusResult, AnnotationError> {
    aggregate_with_policy(labels, ConsensusPolicy::Unanimity)
}

/// Agreement is over the (stance, topic) pair, so labelers agreeing on stance
/// but not on topic still flag the sample.
pub fn aggregate_with_policy(
    labels: &[ModelLabel],
    policy: ConsensusPolicy,
) -> Result<ConsensusResult, AnnotationError> {
    if labels.len() < 2 {
        return Err(AnnotationError::InsufficientLabels(labels.len()));
    }
    let sample_id = labels[0].sample_id.clone();
    let mut votes: BTreeMap<(StanceLabel, TopicCategory), usize> = BTreeMap::new();
    for l in labels {
        *votes.entry((l.stance, l.topic)).or_default() += 1;
    }
    let winner = match policy {
        ConsensusPolicy::Unanimity => (votes.len() == 1).then(|| *votes.keys().next().expect("one")),
        ConsensusPolicy::Majority => votes
            .iter()
            .find(|(_, n)| **n * 2 > labels.len())
            .map(|(k, _)| *k),
    };
    Ok(match winner {
        Some((stance, topic)) => ConsensusResult {
            sample_id,
            status: ConsensusStatus::Unanimous,
            final_stance: Some(stance),
            final_topic: Some(topic),
        },
        None => ConsensusResult {
            sample_id,
            status: ConsensusStatus::Flagged,
            final_stance: None,
            final_topic: None,
        },
    })
}
