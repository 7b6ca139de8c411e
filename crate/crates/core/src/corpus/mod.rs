//! Corpus construction: cleaning, language and length filters, image expansion
//! and dataset statistics.

mod build;
mod clean;
mod expand;
mod lang;
mod records;
mod stats;

use std::fs;
use std::path::Path;

use thiserror::Error;

pub use build::{build_corpus, BuildConfig, Corpus, RecordKind, Reject, RejectReason};
pub use clean::{
    clean_text, passes_length_filter, word_count, LengthBounds, COLLAPSIBLE, STRIP_SET,
};
pub use expand::{effective_image_count, expand_post};
pub use lang::{Detection, LanguageDetector, LexiconDetector};
pub use records::{Comment, MediaKind, MediaRef, Post, Sample, SampleStub};
pub use stats::{corpus_stats, AuthorStats, StatsReport};

use crate::jsonl;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no language detector configured")]
    DetectorUnavailable,
    #[error("post `{post_id}` has no image or extractable first frame")]
    NoUsableMedia { post_id: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{count} samples have no stance label")]
    UnlabeledSamples { count: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<jsonl::JsonlError> for CorpusError {
    fn from(e: jsonl::JsonlError) -> Self {
        CorpusError::Schema(e.to_string())
    }
}

/// True iff the detector reports English with at least `threshold` confidence.
pub fn is_english(
    text: &str,
    detector: Option<&dyn LanguageDetector>,
    threshold: f64,
) -> Result<bool, CorpusError> {
    let detector = detector.ok_or(CorpusError::DetectorUnavailable)?;
    if text.trim().is_empty() {
        return Ok(false);
    }
    let d = detector.detect(text);
    Ok(d.lang == "en" && d.confidence >= threshold)
}

pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const REJECTS_FILE: &str = "rejects.jsonl";
pub const POSTS_FILE: &str = "posts.jsonl";
pub const COMMENTS_FILE: &str = "comments.jsonl";
pub const STATS_FILE: &str = "stats.json";

/// Writes the corpus directory. `stats.json` is only written when every sample
/// carries a stance; otherwise any stale copy is removed.
pub fn write_corpus_dir(corpus: &Corpus, dir: &Path) -> Result<Option<StatsReport>, CorpusError> {
    fs::create_dir_all(dir)?;
    jsonl::write(&dir.join(SAMPLES_FILE), &corpus.samples)?;
    jsonl::write(&dir.join(REJECTS_FILE), &corpus.rejects)?;
    jsonl::write(&dir.join(POSTS_FILE), &corpus.posts)?;
    jsonl::write(&dir.join(COMMENTS_FILE), &corpus.comments)?;
    let stats_path = dir.join(STATS_FILE);
    match corpus_stats(corpus) {
        Ok(report) => {
            let json = serde_json::to_string_pretty(&report).expect("stats serialise");
            fs::write(&stats_path, json + "\n")?;
            Ok(Some(report))
        }
        Err(CorpusError::UnlabeledSamples { count }) => {
            log::warn!("{count} unlabeled samples; stats.json not written");
            if stats_path.exists() {
                fs::remove_file(&stats_path)?;
            }
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

pub fn read_corpus_dir(dir: &Path) -> Result<Corpus, CorpusError> {
    let optional = |name: &str| -> Result<bool, CorpusError> { Ok(dir.join(name).exists()) };
    let samples = jsonl::read(&dir.join(SAMPLES_FILE))?;
    let rejects = if optional(REJECTS_FILE)? {
        jsonl::read(&dir.join(REJECTS_FILE))?
    } else {
        Vec::new()
    };
    let posts = if optional(POSTS_FILE)? {
        jsonl::read(&dir.join(POSTS_FILE))?
    } else {
        Vec::new()
    };
    let comments = if optional(COMMENTS_FILE)? {
        jsonl::read(&dir.join(COMMENTS_FILE))?
    } else {
        Vec::new()
    };
    Ok(Corpus {
        posts,
        comments,
        samples,
        rejects,
    })
}

pub fn read_posts(path: &Path) -> Result<Vec<Post>, CorpusError> {
    Ok(jsonl::read(path)?)
}

pub fn read_comments(path: &Path) -> Result<Vec<Comment>, CorpusError> {
    Ok(jsonl::read(path)?)
}
