use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GenerationError;
use crate::corpus::Sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub train_posts: Vec<String>,
    pub test_posts: Vec<String>,
    pub warnings: Vec<String>,
}

/// Splits by post: the sorted distinct post ids are shuffled with `seed` and the
/// first `round(ratio * n_posts)` go to train. Within each side samples keep
/// their input order.
pub fn split_dataset(samples: &[Sample], ratio: f64, seed: u64) -> Result<Split, GenerationError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(GenerationError::InvalidRatio(ratio));
    }
    if samples.is_empty() {
        return Err(GenerationError::EmptyCorpus);
    }
    let mut groups: BTreeMap<&str, usize> = BTreeMap::new();
    for s in samples {
        *groups.entry(s.post_id.as_str()).or_default() += 1;
    }
    let mut ids: Vec<&str> = groups.keys().copied().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratio * ids.len() as f64).round() as usize;
    let (train_ids, test_ids) = ids.split_at(n_train);
    let mut train_posts: Vec<String> = train_ids.iter().map(|s| s.to_string()).collect();
    let mut test_posts: Vec<String> = test_ids.iter().map(|s| s.to_string()).collect();
    let is_train: BTreeMap<&str, bool> = train_ids
        .iter()
        .map(|id| (*id, true))
        .chain(test_ids.iter().map(|id| (*id, false)))
        .collect();
    let (train, test): (Vec<Sample>, Vec<Sample>) = samples
        .iter()
        .cloned()
        .partition(|s| is_train[s.post_id.as_str()]);
    train_posts.sort();
    test_posts.sort();
    let mut warnings = Vec::new();
    if train.is_empty() || test.is_empty() {
        let side = if train.is_empty() { "train" } else { "test" };
        let w = format!(
            "{} post(s) at ratio {ratio} leave the {side} side empty",
            ids.len()
        );
        log::warn!("{w}");
        warnings.push(w);
    }
    Ok(Split {
        train,
        test,
        train_posts,
        test_posts,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Comment, MediaRef};
    use crate::labels::Author;

    fn samples(posts: usize, per_post: usize) -> Vec<Sample> {
        let mut out = Vec::new();
        for p in 0..posts {
            for i in 0..per_post {
                let post_id = format!("p{p}");
                out.push(Sample {
                    sample_id: Sample::id_for(&post_id, i, "c"),
                    post_id: post_id.clone(),
                    author: Author::Trump,
                    post_text: "t".into(),
                    image: MediaRef::image("i.jpg"),
                    comment: Comment {
                        id: "c".into(),
                        parent_post_id: post_id,
                        text: "c".into(),
                        media: vec![],
                        stance: None,
                        style: None,
                    },
                    stance: None,
                    topic: None,
                });
            }
        }
        out
    }

    #[test]
    fn ten_posts_eight_two() {
        let s = split_dataset(&samples(10, 3), 0.8, 7).unwrap();
        assert_eq!(s.train_posts.len(), 8);
        assert_eq!(s.test_posts.len(), 2);
        assert_eq!(s.train.len(), 24);
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn single_post_goes_to_train_with_warning() {
        let s = split_dataset(&samples(1, 2), 0.8, 1).unwrap();
        assert_eq!(s.train.len(), 2);
        assert!(s.test.is_empty());
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(split_dataset(&[], 0.8, 1), Err(GenerationError::EmptyCorpus)));
        assert!(matches!(
            split_dataset(&samples(2, 1), 1.0, 1),
            Err(GenerationError::InvalidRatio(_))
        ));
    }

    #[test]
    fn seeds_change_the_split() {
        let data = samples(20, 1);
        let a = split_dataset(&data, 0.8, 1).unwrap();
        assert_eq!(a, split_dataset(&data, 0.8, 1).unwrap());
        let differs = (2..12).any(|seed| split_dataset(&data, 0.8, seed).unwrap().test_posts != a.test_posts);
        assert!(differs);
    }
}
