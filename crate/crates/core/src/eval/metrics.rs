use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backends::{JointEmbedder, LmScorer, StanceClassifier, TextEmbedder};
use super::{EvalError, EvalItem};

/// Sum of values in sorted order, so the result does not depend on item order.
fn stable_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_items(items: &[EvalItem]) -> Result<(), EvalError> {
    if items.is_empty() {
        return Err(EvalError::NoItems);
    }
    if let Some(it) = items.iter().find(|it| it.generated.trim().is_empty()) {
        return Err(EvalError::EmptyGeneration(it.sample_id.clone()));
    }
    Ok(())
}

/// Maps `f` over items on a pool of at most `cap` threads, keeping item order.
fn par_map<T: Send>(
    items: &[EvalItem],
    cap: usize,
    f: impl Fn(&EvalItem) -> Result<T, EvalError> + Sync + Send,
) -> Result<Vec<T>, EvalError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cap.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().map(f).collect())
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
}

pub(crate) fn controllability_detail(
    items: &[EvalItem],
    classifier: Option<&dyn StanceClassifier>,
) -> Result<(f64, Vec<bool>), EvalError> {
    let classifier =
        classifier.ok_or_else(|| EvalError::ClassifierUnavailable("not configured".into()))?;
    check_items(items)?;
    let matched = par_map(items, classifier.concurrency(), |it| {
        Ok(classifier.classify(&it.generated)? == it.requested_stance)
    })?;
    let hits = matched.iter().filter(|m| **m).count();
    Ok((hits as f64 / items.len() as f64, matched))
}

/// Fraction of items whose generation is classified with the requested stance.
pub fn controllability(
    items: &[EvalItem],
    classifier: Option<&dyn StanceClassifier>,
) -> Result<f64, EvalError> {
    controllability_detail(items, classifier).map(|(v, _)| v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityResult {
    /// Arithmetic mean of per-response perplexities.
    pub mean: f64,
    /// `exp(-sum logL / sum tokens)` over all items.
    pub token_weighted: f64,
    pub per_item: Vec<f64>,
}

pub fn perplexity(items: &[EvalItem], scorer: Option<&dyn LmScorer>) -> Result<PerplexityResult, EvalError> {
    let scorer = scorer.ok_or_else(|| EvalError::ScorerUnavailable("not configured".into()))?;
    check_items(items)?;
    let scores = par_map(items, scorer.concurrency(), |it| {
        let s = scorer.score(&it.generated)?;
        if s.tokens == 0 {
            return Err(EvalError::ZeroTokens(it.sample_id.clone()));
        }
        Ok(s)
    })?;
    let per_item: Vec<f64> = scores
        .iter()
        .map(|s| (-s.log_likelihood / s.tokens as f64).exp())
        .collect();
    let total_ll: f64 = {
        let mut v: Vec<f64> = scores.iter().map(|s| s.log_likelihood).collect();
        v.sort_by(f64::total_cmp);
        v.iter().sum()
    };
    let total_tokens: usize = scores.iter().map(|s| s.tokens).sum();
    Ok(PerplexityResult {
        mean: stable_mean(&per_item),
        token_weighted: (-total_ll / total_tokens as f64).exp(),
        per_item,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineResult {
    pub mean: f64,
    pub per_item: Vec<f64>,
}

/// Mean cosine between embeddings of the generated and reference comments.
pub fn relevance(items: &[EvalItem], embedder: Option<&dyn TextEmbedder>) -> Result<CosineResult, EvalError> {
    let embedder = embedder.ok_or_else(|| EvalError::EmbedderUnavailable("not configured".into()))?;
    check_items(items)?;
    let per_item = par_map(items, embedder.concurrency(), |it| {
        let g = embedder.embed(&it.generated)?;
        let r = embedder.embed(&it.reference)?;
        cosine(&g, &r).ok_or_else(|| EvalError::ZeroEmbedding(it.sample_id.clone()))
    })?;
    Ok(CosineResult {
        mean: stable_mean(&per_item),
        per_item,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmssResult {
    pub cosine: CosineResult,
    /// Items whose text exceeded the embedder's context limit.
    pub truncated: usize,
}

/// Mean cosine between the generated text and the parent post image in the
/// joint space. Text longer than the context limit is cut to its first
/// `context_limit` whitespace tokens.
pub fn cmss(items: &[EvalItem], joint: Option<&dyn JointEmbedder>) -> Result<CmssResult, EvalError> {
    let joint = joint.ok_or_else(|| EvalError::EmbedderUnavailable("not configured".into()))?;
    check_items(items)?;
    let limit = joint.context_limit();
    let results = par_map(items, joint.concurrency(), |it| {
        let words: Vec<&str> = it.generated.split_whitespace().collect();
        let truncated = words.len() > limit;
        let text = if truncated {
            log::warn!(
                "item `{}`: {} tokens truncated to context limit {limit}",
                it.sample_id,
                words.len()
            );
            words[..limit].join(" ")
        } else {
            it.generated.clone()
        };
        let t = joint.embed_text(&text)?;
        let i = joint.embed_image(&it.image)?;
        let c = cosine(&t, &i).ok_or_else(|| EvalError::ZeroEmbedding(it.sample_id.clone()))?;
        Ok((c, truncated))
    })?;
    let per_item: Vec<f64> = results.iter().map(|r| r.0).collect();
    Ok(CmssResult {
        cosine: CosineResult {
            mean: stable_mean(&per_item),
            per_item,
        },
        truncated: results.iter().filter(|r| r.1).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::backends::*;
    use crate::labels::StanceLabel;
    use std::collections::HashMap;

    fn item(i: usize, generated: &str, stance: StanceLabel) -> EvalItem {
        EvalItem {
            sample_id: format!("s{i}"),
            model: None,
            modality: None,
            target: None,
            requested_stance: stance,
            generated: generated.into(),
            reference: "ref".into(),
            image: format!("img{i}.jpg"),
        }
    }

    #[test]
    fn eight_of_ten() {
        let items: Vec<_> = (0..10)
            .map(|i| {
                let tag = if i < 8 { "[FAVOR] x" } else { "[AGAINST] x" };
                item(i, tag, StanceLabel::Favor)
            })
            .collect();
        let c = controllability(&items, Some(&KeywordClassifier::default())).unwrap();
        assert_eq!(c, 0.8);
        assert!(matches!(controllability(&items, None), Err(EvalError::ClassifierUnavailable(_))));
    }

    #[test]
    fn perplexity_mean_and_weighted() {
        let mut s = ScriptedScorer::default();
        s.log_probs.insert("a".into(), vec![-(10f64).ln()]);
        s.log_probs.insert("b b".into(), vec![-(30f64).ln(); 2]);
        let items = vec![item(0, "a", StanceLabel::Favor), item(1, "b b", StanceLabel::Favor)];
        let p = perplexity(&items, Some(&s)).unwrap();
        assert!((p.mean - 20.0).abs() < 1e-12);
        let expected = ((10f64.ln() + 2.0 * 30f64.ln()) / 3.0).exp();
        assert!((p.token_weighted - expected).abs() < 1e-12);
        s.log_probs.insert("z".into(), vec![]);
        assert!(matches!(
            perplexity(&[item(2, "z", StanceLabel::Favor)], Some(&s)),
            Err(EvalError::ZeroTokens(_))
        ));
    }

    #[test]
    fn cosine_edges() {
        let e = HashingTextEmbedder { dim: 64 };
        let mut it = item(0, "same words here", StanceLabel::Favor);
        it.reference = "same words here".into();
        assert!((relevance(&[it], Some(&e)).unwrap().mean - 1.0).abs() < 1e-15);
        let mut orth = ScriptedTextEmbedder::default();
        orth.vectors.insert("g".into(), vec![1.0, 0.0]);
        orth.vectors.insert("ref".into(), vec![0.0, 2.0]);
        assert_eq!(relevance(&[item(0, "g", StanceLabel::Favor)], Some(&orth)).unwrap().mean, 0.0);
    }

    #[test]
    fn cmss_constant_and_truncation() {
        let c = ConstantJointEmbedder {
            vector: vec![0.5, 0.5],
            context_limit: 3,
        };
        let items = vec![
            item(0, "one two three four five", StanceLabel::Favor),
            item(1, "short", StanceLabel::Favor),
        ];
        let r = cmss(&items, Some(&c)).unwrap();
        assert!((r.cosine.mean - 1.0).abs() < 1e-15);
        assert_eq!(r.truncated, 1);
        let s = ScriptedJointEmbedder {
            texts: HashMap::from([("t".to_string(), vec![1.0, 0.0])]),
            images: HashMap::new(),
            context_limit: 0,
        };
        assert!(matches!(
            cmss(&[item(0, "t", StanceLabel::Favor)], Some(&s)),
            Err(EvalError::ImageUnreadable(_))
        ));
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(
            controllability(&[], Some(&KeywordClassifier::default())),
            Err(EvalError::NoItems)
        ));
        assert!(matches!(
            perplexity(&[item(0, "  ", StanceLabel::Favor)], Some(&UniformScorer { vocab: 5 })),
            Err(EvalError::EmptyGeneration(_))
        ));
    }
}
