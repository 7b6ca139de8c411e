use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::build::Corpus;
use super::CorpusError;
use crate::labels::{Author, StanceLabel, StyleCategory};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuthorStats {
    pub posts: usize,
    pub post_images: usize,
    pub comments: usize,
    pub favor: usize,
    pub against: usize,
    pub samples: usize,
    pub favor_proportion: f64,
    pub against_proportion: f64,
    /// Share of each style among samples that carry a style label.
    pub style_distribution: BTreeMap<StyleCategory, f64>,
    pub styled_samples: usize,
    /// Share of distinct comments with at least one image attachment.
    pub comments_with_images: f64,
    /// Share of distinct comments with at least one video or GIF attachment.
    pub comments_with_videos: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub per_author: BTreeMap<Author, AuthorStats>,
    pub total: AuthorStats,
}

impl StatsReport {
    pub fn author(&self, author: Author) -> Option<&AuthorStats> {
        self.per_author.get(&author)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn summarize<'a>(
    corpus: &'a Corpus,
    keep: impl Fn(Author) -> bool,
) -> AuthorStats {
    let mut s = AuthorStats::default();
    let mut kept_posts = HashSet::new();
    for p in corpus.posts.iter().filter(|p| keep(p.author)) {
        s.posts += 1;
        s.post_images += corpus.post_image_count(&p.id);
        kept_posts.insert(p.id.as_str());
    }
    let mut with_images = 0;
    let mut with_videos = 0;
    for c in corpus
        .comments
        .iter()
        .filter(|c| kept_posts.contains(c.parent_post_id.as_str()))
    {
        s.comments += 1;
        with_images += usize::from(c.has_image());
        with_videos += usize::from(c.has_video());
    }
    let mut styles: BTreeMap<StyleCategory, usize> = BTreeMap::new();
    for sample in corpus.samples.iter().filter(|x| keep(x.author)) {
        s.samples += 1;
        match sample.stance {
            Some(StanceLabel::Favor) => s.favor += 1,
            Some(StanceLabel::Against) => s.against += 1,
            None => {}
        }
        if let Some(style) = sample.comment.style {
            *styles.entry(style).or_default() += 1;
            s.styled_samples += 1;
        }
    }
    s.favor_proportion = ratio(s.favor, s.samples);
    s.against_proportion = ratio(s.against, s.samples);
    s.style_distribution = styles
        .into_iter()
        .map(|(k, n)| (k, ratio(n, s.styled_samples)))
        .collect();
    s.comments_with_images = ratio(with_images, s.comments);
    s.comments_with_videos = ratio(with_videos, s.comments);
    s
}

/// Dataset statistics in the layout of the per-candidate summary table.
pub fn corpus_stats(corpus: &Corpus) -> Result<StatsReport, CorpusError> {
    let unlabeled = corpus.samples.iter().filter(|s| s.stance.is_none()).count();
    if unlabeled > 0 {
        return Err(CorpusError::UnlabeledSamples { count: unlabeled });
    }
    let authors: std::collections::BTreeSet<Author> = corpus
        .posts
        .iter()
        .map(|p| p.author)
        .chain(corpus.samples.iter().map(|s| s.author))
        .collect();
    let per_author = authors
        .into_iter()
        .map(|a| (a, summarize(corpus, |x| x == a)))
        .collect();
    Ok(StatsReport {
        per_author,
        total: summarize(corpus, |_| true),
    })
}
