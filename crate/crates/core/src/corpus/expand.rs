use super::records::{MediaKind, MediaRef, Post, SampleStub};
use super::CorpusError;

/// One stub per still image the post contributes: every `IMAGE` attachment plus
/// the first frame of every video or GIF. Attachments without a usable still
/// (empty image locator, motion media whose frame was never extracted) are skipped.
pub fn expand_post(post: &Post, post_text: &str) -> Result<Vec<SampleStub>, CorpusError> {
    let stubs: Vec<SampleStub> = post
        .media
        .iter()
        .filter_map(MediaRef::effective_image)
        .enumerate()
        .map(|(image_index, uri)| SampleStub {
            post_id: post.id.clone(),
            image_index,
            post_text: post_text.to_string(),
            image: MediaRef::image(uri),
        })
        .collect();
    if stubs.is_empty() {
        return Err(CorpusError::NoUsableMedia {
            post_id: post.id.clone(),
        });
    }
    Ok(stubs)
}

/// Number of stills a post would expand to, counted straight from the media kinds.
pub fn effective_image_count(media: &[MediaRef]) -> usize {
    media
        .iter()
        .filter(|m| match m.kind {
            MediaKind::Image => !m.uri.is_empty(),
            _ => m.first_frame_uri.as_deref().is_some_and(|u| !u.is_empty()),
        })
        .count()
}
