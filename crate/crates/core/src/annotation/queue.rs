use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::labeler::ModelLabel;
use super::AnnotationError;
use crate::labels::{StanceLabel, StyleCategory, TopicCategory};

pub const MAX_HUMAN_LABELS: usize = 3;

/// Ordered so that every legal transition moves to a strictly greater state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QueueState {
    AwaitingFirst,
    AwaitingSecond,
    NeedsThird,
    Resolved,
}

impl std::str::FromStr for QueueState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "AWAITING_FIRST" => Ok(Self::AwaitingFirst),
            "AWAITING_SECOND" => Ok(Self::AwaitingSecond),
            "NEEDS_THIRD" => Ok(Self::NeedsThird),
            "RESOLVED" => Ok(Self::Resolved),
            other => Err(format!("unknown queue state `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub annotator_id: String,
    pub sample_id: String,
    pub stance: StanceLabel,
    pub topic: TopicCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<StyleCategory>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolvedBy {
    /// The first two annotators agreed on stance.
    Agreement,
    /// The third annotator's verdict, final regardless of the earlier two.
    ThirdAnnotator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub stance: StanceLabel,
    pub topic: TopicCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<StyleCategory>,
    pub resolved_by: ResolvedBy,
    /// Set when the two agreeing annotators chose different topics; the first
    /// annotator's topic is kept.
    #[serde(default)]
    pub topic_disputed: bool,
}

/// What the annotators see besides the labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleContext {
    pub post_text: String,
    pub image_uri: String,
    pub comment_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub sample_id: String,
    pub context: SampleContext,
    pub model_labels: Vec<ModelLabel>,
    pub human_labels: Vec<AnnotationRecord>,
    pub state: QueueState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Resolution>,
}

impl QueueEntry {
    pub fn new(sample_id: impl Into<String>, context: SampleContext, model_labels: Vec<ModelLabel>) -> Self {
        Self {
            sample_id: sample_id.into(),
            context,
            model_labels,
            human_labels: Vec::new(),
            state: QueueState::AwaitingFirst,
            resolution: None,
        }
    }

    pub fn final_stance(&self) -> Option<StanceLabel> {
        self.resolution.as_ref().map(|r| r.stance)
    }

    pub fn has_annotator(&self, annotator_id: &str) -> bool {
        self.human_labels.iter().any(|r| r.annotator_id == annotator_id)
    }

    fn check_record(&self, record: &AnnotationRecord) -> Result<(), AnnotationError> {
        if record.sample_id != self.sample_id {
            return Err(AnnotationError::SampleMismatch {
                expected: self.sample_id.clone(),
                got: record.sample_id.clone(),
            });
        }
        if record.annotator_id.trim().is_empty() {
            return Err(AnnotationError::InvalidRecord("empty annotator id".into()));
        }
        Ok(())
    }
}

/// First or second independent human label.
pub fn record_human_label(
    entry: &QueueEntry,
    record: AnnotationRecord,
) -> Result<QueueEntry, AnnotationError> {
    entry.check_record(&record)?;
    match entry.state {
        QueueState::Resolved => {
            return Err(AnnotationError::EntryAlreadyResolved(entry.sample_id.clone()))
        }
        QueueState::NeedsThird => {
            return Err(AnnotationError::WrongState {
                sample_id: entry.sample_id.clone(),
                state: entry.state,
            })
        }
        QueueState::AwaitingFirst | QueueState::AwaitingSecond => {}
    }
    if entry.has_annotator(&record.annotator_id) {
        return Err(AnnotationError::DuplicateAnnotator {
            sample_id: entry.sample_id.clone(),
            annotator_id: record.annotator_id,
        });
    }
    let mut next = entry.clone();
    next.human_labels.push(record);
    next.state = match entry.state {
        QueueState::AwaitingFirst => QueueState::AwaitingSecond,
        _ => {
            let (a, b) = (&next.human_labels[0], &next.human_labels[1]);
            if a.stance == b.stance {
                next.resolution = Some(Resolution {
                    stance: a.stance,
                    topic: a.topic,
                    style: a.style.or(b.style),
                    resolved_by: ResolvedBy::Agreement,
                    topic_disputed: a.topic != b.topic,
                });
                QueueState::Resolved
            } else {
                QueueState::NeedsThird
            }
        }
    };
    Ok(next)
}

/// Third annotator settles a disagreement; their verdict is final.
pub fn resolve_with_third(
    entry: &QueueEntry,
    record: AnnotationRecord,
) -> Result<QueueEntry, AnnotationError> {
    entry.check_record(&record)?;
    if entry.state != QueueState::NeedsThird {
        return Err(AnnotationError::WrongState {
            sample_id: entry.sample_id.clone(),
            state: entry.state,
        });
    }
    if entry.has_annotator(&record.annotator_id) {
        return Err(AnnotationError::AnnotatorNotIndependent {
            sample_id: entry.sample_id.clone(),
            annotator_id: record.annotator_id,
        });
    }
    let mut next = entry.clone();
    next.resolution = Some(Resolution {
        stance: record.stance,
        topic: record.topic,
        style: record.style,
        resolved_by: ResolvedBy::ThirdAnnotator,
        topic_disputed: false,
    });
    next.human_labels.push(record);
    next.state = QueueState::Resolved;
    debug_assert!(next.human_labels.len() <= MAX_HUMAN_LABELS);
    Ok(next)
}

/// Routes a label to the right transition for the entry's current state.
pub fn submit_label(entry: &QueueEntry, record: AnnotationRecord) -> Result<QueueEntry, AnnotationError> {
    match entry.state {
        QueueState::NeedsThird => resolve_with_third(entry, record),
        _ => record_human_label(entry, record),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use StanceLabel::{Against, Favor};

    fn rec(annotator: &str, stance: StanceLabel) -> AnnotationRecord {
        AnnotationRecord {
            annotator_id: annotator.into(),
            sample_id: "s1".into(),
            stance,
            topic: TopicCategory::Other,
            style: None,
            timestamp: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    fn entry() -> QueueEntry {
        QueueEntry::new("s1", SampleContext::default(), vec![])
    }

    #[test]
    fn agreeing_pair_resolves() {
        let e = record_human_label(&entry(), rec("a", Favor)).unwrap();
        assert_eq!(e.state, QueueState::AwaitingSecond);
        let e = record_human_label(&e, rec("b", Favor)).unwrap();
        assert_eq!(e.state, QueueState::Resolved);
        assert_eq!(e.final_stance(), Some(Favor));
        assert_eq!(e.resolution.unwrap().resolved_by, ResolvedBy::Agreement);
    }

    #[test]
    fn disagreement_needs_third() {
        let e = record_human_label(&entry(), rec("a", Favor)).unwrap();
        let e = record_human_label(&e, rec("b", Against)).unwrap();
        assert_eq!(e.state, QueueState::NeedsThird);
        assert_eq!(e.final_stance(), None);
    }

    #[test]
    fn duplicate_annotator() {
        let e = record_human_label(&entry(), rec("a", Favor)).unwrap();
        assert!(matches!(
            record_human_label(&e, rec("a", Against)),
            Err(AnnotationError::DuplicateAnnotator { .. })
        ));
    }

    #[test]
    fn third_annotator_has_final_say() {
        let e = record_human_label(&entry(), rec("a", Favor)).unwrap();
        let e = record_human_label(&e, rec("b", Against)).unwrap();
        for verdict in [Favor, Against] {
            let r = resolve_with_third(&e, rec("c", verdict)).unwrap();
            assert_eq!(r.state, QueueState::Resolved);
            assert_eq!(r.final_stance(), Some(verdict));
            assert_eq!(r.human_labels.len(), 3);
        }
        assert!(matches!(
            resolve_with_third(&e, rec("a", Favor)),
            Err(AnnotationError::AnnotatorNotIndependent { .. })
        ));
        assert!(matches!(
            record_human_label(&e, rec("c", Favor)),
            Err(AnnotationError::WrongState { .. })
        ));
    }

    #[test]
    fn resolved_is_absorbing() {
        let e = record_human_label(&entry(), rec("a", Favor)).unwrap();
        let e = record_human_label(&e, rec("b", Favor)).unwrap();
        assert!(matches!(
            record_human_label(&e, rec("c", Favor)),
            Err(AnnotationError::EntryAlreadyResolved(_))
        ));
        assert!(matches!(
            resolve_with_third(&e, rec("c", Favor)),
            Err(AnnotationError::WrongState { .. })
        ));
        assert!(matches!(
            resolve_with_third(&entry(), rec("c", Favor)),
            Err(AnnotationError::WrongState { .. })
        ));
    }

    #[test]
    fn topic_dispute_is_recorded() {
        let mut b = rec("b", Favor);
        b.topic = TopicCategory::SelfPromotion;
        let e = record_human_label(&entry(), rec("a", Favor)).unwrap();
        let e = record_human_label(&e, b).unwrap();
        let res = e.resolution.unwrap();
        assert!(res.topic_disputed);
        assert_eq!(res.topic, TopicCategory::Other);
    }

    #[test]
    fn sample_mismatch() {
        let mut r = rec("a", Favor);
        r.sample_id = "other".into();
        assert!(matches!(
            record_human_label(&entry(), r),
            Err(AnnotationError::SampleMismatch { .. })
        ));
    }
}
