//! Scorer backend interfaces and deterministic offline implementations.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::digest::fnv1a64;
use crate::labels::StanceLabel;

const DEFAULT_CONCURRENCY: usize = 8;

pub trait StanceClassifier: Send + Sync {
    fn classify(&self, text: &str) -> Result<StanceLabel, EvalError>;
    /// Largest number of concurrent calls the backend accepts.
    fn concurrency(&self) -> usize {
        DEFAULT_CONCURRENCY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    /// Natural-log likelihood of the whole text.
    pub log_likelihood: f64,
    pub tokens: usize,
}

pub trait LmScorer: Send + Sync {
    fn score(&self, text: &str) -> Result<TokenScore, EvalError>;
    fn concurrency(&self) -> usize {
        DEFAULT_CONCURRENCY
    }
}

pub trait TextEmbedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EvalError>;
    fn concurrency(&self) -> usize {
        DEFAULT_CONCURRENCY
    }
}

/// Text and images mapped into one space.
pub trait JointEmbedder: Send + Sync {
    fn embed_text(&self, text: &str) -> Result<Vec<f64>, EvalError>;
    fn embed_image(&self, image: &str) -> Result<Vec<f64>, EvalError>;
    /// Maximum whitespace tokens of text the embedder accepts.
    fn context_limit(&self) -> usize;
    fn concurrency(&self) -> usize {
        DEFAULT_CONCURRENCY
    }
}

/// Fixed text -> label table; unknown texts are an error.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClassifier {
    pub labels: HashMap<String, StanceLabel>,
}

impl StanceClassifier for ScriptedClassifier {
    fn classify(&self, text: &str) -> Result<StanceLabel, EvalError> {
        self.labels
            .get(text)
            .copied()
            .ok_or_else(|| EvalError::ClassifierUnavailable(format!("no scripted label for `{text}`")))
    }
}

/// A leading `[FAVOR]` / `[AGAINST]` tag decides; otherwise the label with
/// more cue-word hits wins, ties going to FAVOR.
#[derive(Debug, Clone)]
pub struct KeywordClassifier {
    pub favor: Vec<String>,
    pub against: Vec<String>,
}

impl Default for KeywordClassifier {
    fn default() -> Self {
        let v = |ws: &[&str]| ws.iter().map(|s| s.to_string()).collect();
        Self {
            favor: v(&[
                "great", "proud", "support", "yes", "love", "strong", "thank", "best", "win",
                "together", "favor",
            ]),
            against: v(&[
                "no", "not", "never", "worst", "liar", "fake", "terrible", "disaster", "against",
                "fraud", "corrupt", "failed", "shame", "lies",
            ]),
        }
    }
}

impl StanceClassifier for KeywordClassifier {
    fn classify(&self, text: &str) -> Result<StanceLabel, EvalError> {
        let t = text.trim_start();
        for &label in StanceLabel::ALL.iter() {
            if t.starts_with(&format!("[{}]", label.as_str())) {
                return Ok(label);
            }
        }
        let words: Vec<String> = t
            .split(|c: char| !c.is_alphanumeric() && c != '\'')
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect();
        let hits = |cues: &[String]| words.iter().filter(|w| cues.contains(w)).count();
        if hits(&self.against) > hits(&self.favor) {
            Ok(StanceLabel::Against)
        } else {
            Ok(StanceLabel::Favor)
        }
    }
}

/// Every whitespace token has probability `1 / vocab`, so perplexity is
/// `vocab` (to the last few bits of `exp(ln vocab)`; exact at 4 decimals).
#[derive(Debug, Clone, Copy)]
pub struct UniformScorer {
    pub vocab: usize,
}

impl LmScorer for UniformScorer {
    fn score(&self, text: &str) -> Result<TokenScore, EvalError> {
        let tokens = text.split_whitespace().count();
        Ok(TokenScore {
            log_likelihood: -(tokens as f64) * (self.vocab as f64).ln(),
            tokens,
        })
    }
}

/// Fixed per-token log-probabilities by text.
#[derive(Debug, Clone, Default)]
pub struct ScriptedScorer {
    pub log_probs: HashMap<String, Vec<f64>>,
}

impl LmScorer for ScriptedScorer {
    fn score(&self, text: &str) -> Result<TokenScore, EvalError> {
        let lp = self
            .log_probs
            .get(text)
            .ok_or_else(|| EvalError::ScorerUnavailable(format!("no scripted scores for `{text}`")))?;
        Ok(TokenScore {
            log_likelihood: lp.iter().sum(),
            tokens: lp.len(),
        })
    }
}

/// Signed feature hashing of lower-cased words.
#[derive(Debug, Clone, Copy)]
pub struct HashingTextEmbedder {
    pub dim: usize,
}

fn hash_words(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for w in text.split_whitespace() {
        let h = fnv1a64(w.to_lowercase().as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    v
}

impl TextEmbedder for HashingTextEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EvalError> {
        Ok(hash_words(text, self.dim))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedTextEmbedder {
    pub vectors: HashMap<String, Vec<f64>>,
}

impl TextEmbedder for ScriptedTextEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EvalError> {
        self.vectors
            .get(text)
            .cloned()
            .ok_or_else(|| EvalError::EmbedderUnavailable(format!("no scripted vector for `{text}`")))
    }
}

/// Maps every text and image to the same vector.
#[derive(Debug, Clone)]
pub struct ConstantJointEmbedder {
    pub vector: Vec<f64>,
    pub context_limit: usize,
}

impl Default for ConstantJointEmbedder {
    fn default() -> Self {
        Self {
            vector: vec![1.0, 0.0, 0.0, 0.0],
            context_limit: 77,
        }
    }
}

impl JointEmbedder for ConstantJointEmbedder {
    fn embed_text(&self, _: &str) -> Result<Vec<f64>, EvalError> {
        Ok(self.vector.clone())
    }

    fn embed_image(&self, _: &str) -> Result<Vec<f64>, EvalError> {
        Ok(self.vector.clone())
    }

    fn context_limit(&self) -> usize {
        self.context_limit
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedJointEmbedder {
    pub texts: HashMap<String, Vec<f64>>,
    pub images: HashMap<String, Vec<f64>>,
    pub context_limit: usize,
}

impl JointEmbedder for ScriptedJointEmbedder {
    fn embed_text(&self, text: &str) -> Result<Vec<f64>, EvalError> {
        self.texts
            .get(text)
            .cloned()
            .ok_or_else(|| EvalError::EmbedderUnavailable(format!("no scripted vector for `{text}`")))
    }

    fn embed_image(&self, image: &str) -> Result<Vec<f64>, EvalError> {
        self.images
            .get(image)
            .cloned()
            .ok_or_else(|| EvalError::ImageUnreadable(image.to_string()))
    }

    fn context_limit(&self) -> usize {
        if self.context_limit == 0 {
            usize::MAX
        } else {
            self.context_limit
        }
    }
}

/// Text by word hashing, images by a vector seeded from the locator hash.
#[derive(Debug, Clone, Copy)]
pub struct HashingJointEmbedder {
    pub dim: usize,
    pub context_limit: usize,
}

impl JointEmbedder for HashingJointEmbedder {
    fn embed_text(&self, text: &str) -> Result<Vec<f64>, EvalError> {
        Ok(hash_words(text, self.dim))
    }

    fn embed_image(&self, image: &str) -> Result<Vec<f64>, EvalError> {
        if image.trim().is_empty() {
            return Err(EvalError::ImageUnreadable(image.to_string()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(image.as_bytes()));
        Ok((0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn context_limit(&self) -> usize {
        self.context_limit
    }
}

/// Backend choices as written in the eval backend config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Keyword,
    /// JSON object `{text: "FAVOR" | "AGAINST"}`.
    Scripted { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerSpec {
    Uniform { vocab: usize },
    /// JSON object `{text: [log_prob, ...]}`.
    Scripted { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Hashing { dim: usize },
    /// JSON object `{text: [f64, ...]}`.
    Scripted { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JointSpec {
    Hashing { dim: usize, context_limit: usize },
    Constant { dim: usize },
}

/// TOML backend registry. A missing section leaves that metric's backend
/// unavailable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub classifier: Option<ClassifierSpec>,
    pub scorer: Option<ScorerSpec>,
    pub embedder: Option<EmbedderSpec>,
    pub joint: Option<JointSpec>,
}

impl Default for BackendConfig {
    /// All offline stubs.
    fn default() -> Self {
        Self {
            classifier: Some(ClassifierSpec::Keyword),
            scorer: Some(ScorerSpec::Uniform { vocab: 100 }),
            embedder: Some(EmbedderSpec::Hashing { dim: 256 }),
            joint: Some(JointSpec::Hashing {
                dim: 64,
                context_limit: 77,
            }),
        }
    }
}

impl BackendConfig {
    pub fn from_toml(s: &str) -> Result<Self, EvalError> {
        toml::from_str(s).map_err(|e| EvalError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("backend config serializes")
    }
}

#[derive(Default)]
pub struct Backends {
    pub classifier: Option<Box<dyn StanceClassifier>>,
    pub scorer: Option<Box<dyn LmScorer>>,
    pub embedder: Option<Box<dyn TextEmbedder>>,
    pub joint: Option<Box<dyn JointEmbedder>>,
}

fn read_json<T: serde::de::DeserializeOwned>(base: &Path, path: &str) -> Result<T, EvalError> {
    let full = base.join(path);
    let s = std::fs::read_to_string(&full)
        .map_err(|e| EvalError::Config(format!("{}: {e}", full.display())))?;
    serde_json::from_str(&s).map_err(|e| EvalError::Config(format!("{}: {e}", full.display())))
}

impl Backends {
    /// Instantiates the configured backends; relative paths resolve against `base`.
    pub fn from_config(config: &BackendConfig, base: &Path) -> Result<Self, EvalError> {
        let classifier: Option<Box<dyn StanceClassifier>> = match &config.classifier {
            None => None,
            Some(ClassifierSpec::Keyword) => Some(Box::new(KeywordClassifier::default())),
            Some(ClassifierSpec::Scripted { path }) => Some(Box::new(ScriptedClassifier {
                labels: read_json(base, path)?,
            })),
        };
        let scorer: Option<Box<dyn LmScorer>> = match &config.scorer {
            None => None,
            Some(ScorerSpec::Uniform { vocab }) => Some(Box::new(UniformScorer { vocab: *vocab })),
            Some(ScorerSpec::Scripted { path }) => Some(Box::new(ScriptedScorer {
                log_probs: read_json(base, path)?,
            })),
        };
        let embedder: Option<Box<dyn TextEmbedder>> = match &config.embedder {
            None => None,
            Some(EmbedderSpec::Hashing { dim }) => Some(Box::new(HashingTextEmbedder { dim: *dim })),
            Some(EmbedderSpec::Scripted { path }) => Some(Box::new(ScriptedTextEmbedder {
                vectors: read_json(base, path)?,
            })),
        };
        let joint: Option<Box<dyn JointEmbedder>> = match &config.joint {
            None => None,
            Some(JointSpec::Hashing { dim, context_limit }) => Some(Box::new(HashingJointEmbedder {
                dim: *dim,
                context_limit: *context_limit,
            })),
            Some(JointSpec::Constant { dim }) => {
                let mut vector = vec![0.0; (*dim).max(1)];
                vector[0] = 1.0;
                Some(Box::new(ConstantJointEmbedder {
                    vector,
                    context_limit: usize::MAX,
                }))
            }
        };
        Ok(Self {
            classifier,
            scorer,
            embedder,
            joint,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyword_classifier() {
        let k = KeywordClassifier::default();
        assert_eq!(k.classify("[AGAINST] great stuff").unwrap(), StanceLabel::Against);
        assert_eq!(k.classify("worst liar ever").unwrap(), StanceLabel::Against);
        assert_eq!(k.classify("so proud of you").unwrap(), StanceLabel::Favor);
        assert_eq!(k.classify("").unwrap(), StanceLabel::Favor);
    }

    #[test]
    fn config_round_trip() {
        let c = BackendConfig::default();
        assert_eq!(BackendConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = BackendConfig::from_toml("[scorer]\nkind = \"uniform\"\nvocab = 50\n").unwrap();
        assert!(partial.classifier.is_none());
        let b = Backends::from_config(&partial, Path::new(".")).unwrap();
        assert!(b.classifier.is_none() && b.scorer.is_some());
        assert!(BackendConfig::from_toml("[scorer]\nkind = \"gpt2\"\n").is_err());
    }

    #[test]
    fn hashing_embedder_is_case_insensitive() {
        let e = HashingTextEmbedder { dim: 32 };
        assert_eq!(e.embed("Vote Today").unwrap(), e.embed("vote today").unwrap());
    }
}
