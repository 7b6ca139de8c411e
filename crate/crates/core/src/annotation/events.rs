//! Append-only event log for the adjudication queue.
//!
//! The log is the source of truth; the queue map and the snapshot file are
//! derived by replaying it.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::queue::{submit_label, AnnotationRecord, QueueEntry, QueueState};
use super::AnnotationError;
use crate::jsonl;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum QueueEvent {
    Enqueued { entry: QueueEntry },
    Labeled { record: AnnotationRecord },
}

#[derive(Default)]
pub struct AnnotationQueue {
    entries: BTreeMap<String, QueueEntry>,
    /// Enqueue order, used for oldest-first listing.
    order: Vec<String>,
    events: Vec<QueueEvent>,
    sink: Option<BufWriter<File>>,
    log_path: Option<PathBuf>,
}

impl std::fmt::Debug for AnnotationQueue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnnotationQueue")
            .field("entries", &self.entries.len())
            .field("events", &self.events.len())
            .field("log_path", &self.log_path)
            .finish()
    }
}

impl AnnotationQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replays `path` if it exists and keeps appending new events to it.
    pub fn open(path: &Path) -> Result<Self, AnnotationError> {
        let events: Vec<QueueEvent> = if path.exists() {
            jsonl::read(path).map_err(|e| AnnotationError::Log(e.to_string()))?
        } else {
            Vec::new()
        };
        let mut queue = Self::replay(&events)?;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        queue.sink = Some(BufWriter::new(file));
        queue.log_path = Some(path.to_path_buf());
        Ok(queue)
    }

    pub fn replay(events: &[QueueEvent]) -> Result<Self, AnnotationError> {
        let mut queue = Self::new();
        for e in events {
            queue.apply(e.clone())?;
        }
        Ok(queue)
    }

    fn apply(&mut self, event: QueueEvent) -> Result<(), AnnotationError> {
        match &event {
            QueueEvent::Enqueued { entry } => {
                if self.entries.contains_key(&entry.sample_id) {
                    return Err(AnnotationError::AlreadyQueued(entry.sample_id.clone()));
                }
                self.order.push(entry.sample_id.clone());
                self.entries.insert(entry.sample_id.clone(), entry.clone());
            }
            QueueEvent::Labeled { record } => {
                let current = self
                    .entries
                    .get(&record.sample_id)
                    .ok_or_else(|| AnnotationError::UnknownSample(record.sample_id.clone()))?;
                let next = submit_label(current, record.clone())?;
                self.entries.insert(next.sample_id.clone(), next);
            }
        }
        self.events.push(event);
        Ok(())
    }

    fn persist(&mut self, event: &QueueEvent) -> Result<(), AnnotationError> {
        if let Some(sink) = self.sink.as_mut() {
            serde_json::to_writer(&mut *sink, event).map_err(|e| AnnotationError::Log(e.to_string()))?;
            sink.write_all(b"\n")?;
            sink.flush()?;
        }
        Ok(())
    }

    pub fn enqueue(&mut self, entry: QueueEntry) -> Result<(), AnnotationError> {
        let event = QueueEvent::Enqueued { entry };
        self.apply(event.clone())?;
        self.persist(&event)
    }

    /// Validates and applies a human label; only accepted labels reach the log.
    pub fn submit(&mut self, record: AnnotationRecord) -> Result<&QueueEntry, AnnotationError> {
        let event = QueueEvent::Labeled { record };
        self.apply(event.clone())?;
        self.persist(&event)?;
        let QueueEvent::Labeled { record } = event else {
            unreachable!()
        };
        Ok(&self.entries[&record.sample_id])
    }

    pub fn get(&self, sample_id: &str) -> Option<&QueueEntry> {
        self.entries.get(sample_id)
    }

    pub fn events(&self) -> &[QueueEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in enqueue order, optionally restricted to one state.
    pub fn list(&self, state: Option<QueueState>) -> Vec<&QueueEntry> {
        self.order
            .iter()
            .map(|id| &self.entries[id])
            .filter(|e| state.is_none_or(|s| e.state == s))
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = &QueueEntry> {
        self.order.iter().map(|id| &self.entries[id])
    }

    /// Every accepted human label, in submission order.
    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.events
            .iter()
            .filter_map(|e| match e {
                QueueEvent::Labeled { record } => Some(record.clone()),
                QueueEvent::Enqueued { .. } => None,
            })
            .collect()
    }

    pub fn snapshot(&self) -> Vec<QueueEntry> {
        self.entries().cloned().collect()
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<(), AnnotationError> {
        let json = serde_json::to_string_pretty(&self.snapshot())
            .map_err(|e| AnnotationError::Log(e.to_string()))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::queue::SampleContext;
    use crate::labels::{StanceLabel, TopicCategory};
    use chrono::{TimeZone, Utc};

    fn rec(annotator: &str, sample: &str, stance: StanceLabel) -> AnnotationRecord {
        AnnotationRecord {
            annotator_id: annotator.into(),
            sample_id: sample.into(),
            stance,
            topic: TopicCategory::Other,
            style: None,
            timestamp: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    #[test]
    fn rejected_labels_never_reach_the_log() {
        let mut q = AnnotationQueue::new();
        q.enqueue(QueueEntry::new("s", SampleContext::default(), vec![])).unwrap();
        q.submit(rec("a", "s", StanceLabel::Favor)).unwrap();
        assert!(q.submit(rec("a", "s", StanceLabel::Favor)).is_err());
        assert!(q.submit(rec("a", "missing", StanceLabel::Favor)).is_err());
        assert_eq!(q.events().len(), 2);
    }

    #[test]
    fn log_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        {
            let mut q = AnnotationQueue::open(&path).unwrap();
            q.enqueue(QueueEntry::new("s", SampleContext::default(), vec![])).unwrap();
            q.submit(rec("a", "s", StanceLabel::Favor)).unwrap();
            q.submit(rec("b", "s", StanceLabel::Against)).unwrap();
        }
        let mut q = AnnotationQueue::open(&path).unwrap();
        assert_eq!(q.get("s").unwrap().state, QueueState::NeedsThird);
        q.submit(rec("c", "s", StanceLabel::Against)).unwrap();
        let reopened = AnnotationQueue::open(&path).unwrap();
        assert_eq!(reopened.snapshot(), q.snapshot());
        assert_eq!(reopened.get("s").unwrap().final_stance(), Some(StanceLabel::Against));
    }

    #[test]
    fn listing_is_oldest_first_and_filtered() {
        let mut q = AnnotationQueue::new();
        for id in ["z", "a", "m"] {
            q.enqueue(QueueEntry::new(id, SampleContext::default(), vec![])).unwrap();
        }
        let ids: Vec<_> = q.list(None).iter().map(|e| e.sample_id.as_str()).collect();
        assert_eq!(ids, ["z", "a", "m"]);
        q.submit(rec("x", "a", StanceLabel::Favor)).unwrap();
        assert_eq!(q.list(Some(QueueState::AwaitingSecond)).len(), 1);
        assert!(q.enqueue(QueueEntry::new("a", SampleContext::default(), vec![])).is_err());
    }
}
