use std::collections::{HashMap, HashSet};

use chrono::{DateTime, Utc};
use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::clean::{clean_text, LengthBounds};
use super::expand::expand_post;
use super::lang::LanguageDetector;
use super::records::{Comment, Post, Sample, SampleStub};
use super::CorpusError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Inclusive collection window applied to post timestamps.
    #[serde(default)]
    pub window: Option<(DateTime<Utc>, DateTime<Utc>)>,
    /// Word bounds for posts; `None` disables the filter for posts.
    #[serde(default = "default_bounds")]
    pub post_bounds: Option<LengthBounds>,
    /// Word bounds for comments; `None` disables the filter for comments.
    #[serde(default = "default_bounds")]
    pub comment_bounds: Option<LengthBounds>,
    #[serde(default = "default_threshold")]
    pub lang_threshold: f64,
}

fn default_bounds() -> Option<LengthBounds> {
    Some(LengthBounds::default())
}

fn default_threshold() -> f64 {
    0.9
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            window: None,
            post_bounds: default_bounds(),
            comment_bounds: default_bounds(),
            lang_threshold: default_threshold(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    OutsideWindow,
    EmptyText,
    NotEnglish,
    LengthOutOfRange,
    NoUsableMedia,
    ParentRejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Post,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub kind: RecordKind,
    pub id: String,
    pub reason: RejectReason,
    pub detail: String,
}

/// Filtered, expanded corpus. Posts and comments are the accepted records with
/// cleaned text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub posts: Vec<Post>,
    pub comments: Vec<Comment>,
    pub samples: Vec<Sample>,
    pub rejects: Vec<Reject>,
}

impl Corpus {
    pub fn post_image_count(&self, post_id: &str) -> usize {
        let mut seen = HashSet::new();
        for s in self.samples.iter().filter(|s| s.post_id == post_id) {
            seen.insert(s.image.uri.as_str());
        }
        seen.len()
    }
}

/// Outcome of passing one text through clean -> language -> length.
fn screen_text(
    raw: &str,
    bounds: Option<&LengthBounds>,
    detector: &dyn LanguageDetector,
    threshold: f64,
) -> Result<String, (RejectReason, String)> {
    let cleaned = clean_text(raw);
    if cleaned.is_empty() {
        return Err((RejectReason::EmptyText, "empty after cleaning".into()));
    }
    let det = detector.detect(&cleaned);
    if det.lang != "en" || det.confidence < threshold {
        return Err((
            RejectReason::NotEnglish,
            format!("detected {} at {:.3}", det.lang, det.confidence),
        ));
    }
    if let Some(b) = bounds {
        if !b.passes(&cleaned) {
            return Err((
                RejectReason::LengthOutOfRange,
                format!(
                    "{} words outside [{}, {}]",
                    super::clean::word_count(&cleaned),
                    b.min_words,
                    b.max_words
                ),
            ));
        }
    }
    Ok(cleaned)
}

fn check_ids<'a>(
    kind: &str,
    ids: impl Iterator<Item = &'a str>,
) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    for id in ids {
        if id.is_empty() {
            return Err(CorpusError::Schema(format!("{kind} with empty id")));
        }
        if !seen.insert(id) {
            return Err(CorpusError::Schema(format!("duplicate {kind} id `{id}`")));
        }
    }
    Ok(())
}

/// Runs the full filter chain and pairs every surviving comment with every
/// still image of its surviving parent post.
///
/// Records are screened in parallel; output order follows input order.
pub fn build_corpus(
    posts: &[Post],
    comments: &[Comment],
    config: &BuildConfig,
    detector: Option<&dyn LanguageDetector>,
) -> Result<Corpus, CorpusError> {
    check_ids("post", posts.iter().map(|p| p.id.as_str()))?;
    check_ids("comment", comments.iter().map(|c| c.id.as_str()))?;
    let post_index: HashMap<&str, usize> = posts
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.as_str(), i))
        .collect();
    for c in comments {
        if !post_index.contains_key(c.parent_post_id.as_str()) {
            return Err(CorpusError::Schema(format!(
                "comment `{}` references missing post `{}`",
                c.id, c.parent_post_id
            )));
        }
    }
    if posts.is_empty() && comments.is_empty() {
        return Ok(Corpus::default());
    }
    let detector = detector.ok_or(CorpusError::DetectorUnavailable)?;

    let screened_posts: Vec<Result<(Post, Vec<SampleStub>), Reject>> = posts
        .par_iter()
        .map(|p| {
            let reject = |reason, detail: String| Reject {
                kind: RecordKind::Post,
                id: p.id.clone(),
                reason,
                detail,
            };
            if let Some((start, end)) = config.window {
                if p.created_at < start || p.created_at > end {
                    return Err(reject(
                        RejectReason::OutsideWindow,
                        p.created_at.to_rfc3339(),
                    ));
                }
            }
            let text = screen_text(
                &p.text,
                config.post_bounds.as_ref(),
                detector,
                config.lang_threshold,
            )
            .map_err(|(r, d)| reject(r, d))?;
            let stubs = expand_post(p, &text)
                .map_err(|e| reject(RejectReason::NoUsableMedia, e.to_string()))?;
            let mut cleaned = p.clone();
            cleaned.text = text;
            Ok((cleaned, stubs))
        })
        .collect();

    let mut rejects = Vec::new();
    let mut accepted_posts: Vec<Option<(Post, Vec<SampleStub>)>> = Vec::with_capacity(posts.len());
    for r in screened_posts {
        match r {
            Ok(ok) => accepted_posts.push(Some(ok)),
            Err(rej) => {
                rejects.push(rej);
                accepted_posts.push(None);
            }
        }
    }

    let screened_comments: Vec<Result<Comment, Reject>> = comments
        .par_iter()
        .map(|c| {
            let reject = |reason, detail: String| Reject {
                kind: RecordKind::Comment,
                id: c.id.clone(),
                reason,
                detail,
            };
            if accepted_posts[post_index[c.parent_post_id.as_str()]].is_none() {
                return Err(reject(
                    RejectReason::ParentRejected,
                    format!("parent `{}` rejected", c.parent_post_id),
                ));
            }
            let text = screen_text(
                &c.text,
                config.comment_bounds.as_ref(),
                detector,
                config.lang_threshold,
            )
            .map_err(|(r, d)| reject(r, d))?;
            let mut cleaned = c.clone();
            cleaned.text = text;
            Ok(cleaned)
        })
        .collect();

    let mut samples = Vec::new();
    let mut accepted_comments = Vec::new();
    for r in screened_comments {
        match r {
            Ok(c) => {
                let (post, stubs) = accepted_posts[post_index[c.parent_post_id.as_str()]]
                    .as_ref()
                    .expect("parent accepted");
                for stub in stubs {
                    samples.push(Sample {
                        sample_id: Sample::id_for(&post.id, stub.image_index, &c.id),
                        post_id: post.id.clone(),
                        author: post.author,
                        post_text: stub.post_text.clone(),
                        image: stub.image.clone(),
                        comment: c.clone(),
                        stance: c.stance,
                        topic: post.topic,
                    });
                }
                accepted_comments.push(c);
            }
            Err(rej) => rejects.push(rej),
        }
    }
    for rej in &rejects {
        debug!("rejected {:?} {}: {:?} ({})", rej.kind, rej.id, rej.reason, rej.detail);
    }

    Ok(Corpus {
        posts: accepted_posts.into_iter().flatten().map(|(p, _)| p).collect(),
        comments: accepted_comments,
        samples,
        rejects,
    })
}
