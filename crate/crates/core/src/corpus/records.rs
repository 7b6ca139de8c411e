use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::labels::{Author, StanceLabel, StyleCategory, TopicCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MediaKind {
    Image,
    Video,
    Gif,
}

impl MediaKind {
    pub fn is_motion(self) -> bool {
        matches!(self, MediaKind::Video | MediaKind::Gif)
    }
}

/// Locator for one media attachment.
///
/// Videos and GIFs are only usable through `first_frame_uri`, which the
/// external frame extractor fills in before the pipeline runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaRef {
    pub kind: MediaKind,
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_frame_uri: Option<String>,
}

impl MediaRef {
    pub fn image(uri: impl Into<String>) -> Self {
        Self {
            kind: MediaKind::Image,
            uri: uri.into(),
            first_frame_uri: None,
        }
    }

    pub fn motion(kind: MediaKind, uri: impl Into<String>, first_frame: Option<&str>) -> Self {
        Self {
            kind,
            uri: uri.into(),
            first_frame_uri: first_frame.map(str::to_string),
        }
    }

    /// The still image this attachment contributes, if any.
    pub fn effective_image(&self) -> Option<&str> {
        match self.kind {
            MediaKind::Image => Some(self.uri.as_str()).filter(|u| !u.is_empty()),
            MediaKind::Video | MediaKind::Gif => self
                .first_frame_uri
                .as_deref()
                .filter(|u| !u.is_empty()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub author: Author,
    pub text: String,
    #[serde(default)]
    pub media: Vec<MediaRef>,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<TopicCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    pub parent_post_id: String,
    pub text: String,
    #[serde(default)]
    pub media: Vec<MediaRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance: Option<StanceLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<StyleCategory>,
}

impl Comment {
    pub fn has_image(&self) -> bool {
        self.media.iter().any(|m| m.kind == MediaKind::Image)
    }

    pub fn has_video(&self) -> bool {
        self.media.iter().any(|m| m.kind.is_motion())
    }
}

/// One still image of a post paired with the post's cleaned text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleStub {
    pub post_id: String,
    pub image_index: usize,
    pub post_text: String,
    /// Always an `IMAGE` reference; motion media are replaced by their first frame.
    pub image: MediaRef,
}

/// Training/evaluation unit: one post image, the post text and one comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub post_id: String,
    pub author: Author,
    pub post_text: String,
    pub image: MediaRef,
    /// The comment with its cleaned text.
    pub comment: Comment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance: Option<StanceLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<TopicCategory>,
}

impl Sample {
    pub fn id_for(post_id: &str, image_index: usize, comment_id: &str) -> String {
        format!("{post_id}#{image_index}/{comment_id}")
    }
}
