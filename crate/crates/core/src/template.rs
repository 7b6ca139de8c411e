//! Minimal `{slot}` templates with load-time slot validation.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

static SLOT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").expect("slot pattern"));

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("template `{id}` is missing required slot `{{{slot}}}`")]
    MissingSlot { id: String, slot: String },
    #[error("template `{id}` uses slot `{{{slot}}}` more than once")]
    RepeatedSlot { id: String, slot: String },
    #[error("template `{id}` uses unknown slot `{{{slot}}}`")]
    UnknownSlot { id: String, slot: String },
    #[error("no value supplied for slot `{0}`")]
    MissingValue(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub id: String,
    segments: Vec<Segment>,
}

impl Template {
    /// Parses `source` and checks that every slot in `required` appears exactly
    /// once and no other slot appears.
    pub fn parse(id: &str, source: &str, required: &[&str]) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut last = 0;
        for cap in SLOT.captures_iter(source) {
            let whole = cap.get(0).expect("match");
            let name = cap[1].to_string();
            if !required.contains(&name.as_str()) {
                return Err(TemplateError::UnknownSlot {
                    id: id.to_string(),
                    slot: name,
                });
            }
            if whole.start() > last {
                segments.push(Segment::Text(source[last..whole.start()].to_string()));
            }
            *counts.entry(name.clone()).or_default() += 1;
            segments.push(Segment::Slot(name));
            last = whole.end();
        }
        if last < source.len() {
            segments.push(Segment::Text(source[last..].to_string()));
        }
        for slot in required {
            match counts.get(*slot) {
                None => {
                    return Err(TemplateError::MissingSlot {
                        id: id.to_string(),
                        slot: slot.to_string(),
                    })
                }
                Some(n) if *n > 1 => {
                    return Err(TemplateError::RepeatedSlot {
                        id: id.to_string(),
                        slot: slot.to_string(),
                    })
                }
                _ => {}
            }
        }
        Ok(Self {
            id: id.to_string(),
            segments,
        })
    }

    pub fn slots(&self) -> BTreeSet<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(n) => Some(n.as_str()),
                Segment::Text(_) => None,
            })
            .collect()
    }

    /// Literal text of the template with slots removed.
    pub fn literal_text(&self) -> String {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Text(t) => Some(t.as_str()),
                Segment::Slot(_) => None,
            })
            .collect()
    }

    /// Single-pass substitution: braces inside supplied values are never expanded.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(name) => {
                    let v = values
                        .iter()
                        .find(|(k, _)| k == name)
                        .ok_or_else(|| TemplateError::MissingValue(name.clone()))?;
                    out.push_str(v.1);
                }
            }
        }
        Ok(out)
    }
}
