use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::instruction::IMAGE_MARKER;
use super::GenerationError;
use crate::chat::{ChatClient, RetryPolicy};
use crate::digest::fnv1a64;
use crate::labels::StanceLabel;
use crate::sdmg::SdmgModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub request_id: String,
    pub sample_id: String,
    pub instruction: String,
    pub post_text: String,
    pub image: String,
    pub stance: StanceLabel,
    /// Fused-feature conditioning, honoured only by the local toy backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditioning: Option<String>,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendReply {
    pub text: String,
    #[serde(default)]
    pub raw: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedResponse {
    pub request_id: String,
    pub sample_id: String,
    pub stance: StanceLabel,
    pub backend: String,
    pub text: String,
    pub attempts: u32,
    pub latency_ms: u64,
    #[serde(default)]
    pub raw: serde_json::Value,
}

pub trait Generator: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, request: &GenerationRequest) -> Result<BackendReply, GenerationError>;
}

/// Runs one request with retries. Only `BackendUnavailable` is retried.
pub fn generate(
    request: &GenerationRequest,
    backend: &dyn Generator,
    retry: &RetryPolicy,
) -> Result<GeneratedResponse, GenerationError> {
    let start = Instant::now();
    let mut attempts = 0;
    let reply = retry
        .run(|| {
            attempts += 1;
            match backend.generate(request) {
                Err(e @ GenerationError::BackendUnavailable { .. }) => Err(Some(e)),
                Err(e) => Ok(Err(e)),
                Ok(r) => Ok(Ok(r)),
            }
        })
        .map_err(|(e, n)| match e {
            Some(GenerationError::BackendUnavailable { backend, reason, .. }) => {
                GenerationError::BackendUnavailable {
                    backend,
                    attempts: n,
                    reason,
                }
            }
            Some(other) => other,
            None => unreachable!("only backend errors are retried"),
        })??;
    if reply.text.trim().is_empty() {
        return Err(GenerationError::EmptyGeneration {
            backend: backend.id().to_string(),
            request_id: request.request_id.clone(),
        });
    }
    Ok(GeneratedResponse {
        request_id: request.request_id.clone(),
        sample_id: request.sample_id.clone(),
        stance: request.stance,
        backend: backend.id().to_string(),
        text: reply.text,
        attempts,
        latency_ms: start.elapsed().as_millis() as u64,
        raw: reply.raw,
    })
}

/// Runs `requests` with at most `in_flight` concurrently. Results are returned
/// in request order.
pub fn generate_batch(
    requests: &[GenerationRequest],
    backend: &dyn Generator,
    retry: &RetryPolicy,
    in_flight: usize,
) -> Vec<Result<GeneratedResponse, GenerationError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(in_flight.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        requests
            .par_iter()
            .map(|r| generate(r, backend, retry))
            .collect()
    })
}

/// Deterministic test backend. The reply is `"[<STANCE>] "` followed by the
/// instruction with the image marker removed and whitespace collapsed.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoStub;

impl EchoStub {
    pub fn reply_for(instruction: &str, stance: StanceLabel) -> String {
        let body = instruction
            .replace(IMAGE_MARKER, " ")
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        format!("[{}] {body}", stance.as_str())
    }
}

impl Generator for EchoStub {
    fn id(&self) -> &str {
        "echo"
    }

    fn generate(&self, request: &GenerationRequest) -> Result<BackendReply, GenerationError> {
        Ok(BackendReply {
            text: Self::reply_for(&request.instruction, request.stance),
            raw: serde_json::Value::Null,
        })
    }
}

/// Hosted chat-completion backend; the instruction is sent as the user turn.
pub struct ChatGenerator {
    pub id: String,
    pub client: Arc<dyn ChatClient>,
    pub system: String,
}

impl ChatGenerator {
    pub fn new(id: &str, client: Arc<dyn ChatClient>) -> Self {
        Self {
            id: id.to_string(),
            client,
            system: "You write short replies to social media posts.".into(),
        }
    }
}

impl Generator for ChatGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerationRequest) -> Result<BackendReply, GenerationError> {
        let text = self
            .client
            .complete(&self.system, &request.instruction)
            .map_err(|e| GenerationError::BackendUnavailable {
                backend: self.id.clone(),
                attempts: 1,
                reason: e.to_string(),
            })?;
        Ok(BackendReply {
            text: text.trim().to_string(),
            raw: serde_json::Value::Null,
        })
    }
}

const FAVOR_WORDS: &[&str] = &[
    "great", "proud", "support", "yes", "love", "strong", "thank", "leader", "win", "together",
];
const AGAINST_WORDS: &[&str] = &[
    "never", "worst", "fake", "shame", "failed", "lies", "disaster", "not", "corrupt", "no",
];
const NEUTRAL_WORDS: &[&str] = &[
    "this", "is", "the", "country", "people", "america", "vote", "today", "future", "again",
    "we", "you", "election", "more", "all",
];

/// Local toy decoder conditioned on the fused feature of (post image, post
/// text). The fused vector is the single prefix embedding: it initialises the
/// decoder state, and each step picks the highest-scoring unused word under
/// `score(w) = e_w . h + stance_bias(w)`, then sets `h <- h/2 + e_w`.
pub struct ToyPrefixGenerator {
    pub model: SdmgModel,
    pub length: usize,
    pub stance_bias: f64,
    vocab: Vec<&'static str>,
    table: ndarray::Array2<f64>,
}

impl ToyPrefixGenerator {
    pub fn new(model: SdmgModel, seed: u64) -> Self {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let vocab: Vec<&'static str> = FAVOR_WORDS
            .iter()
            .chain(AGAINST_WORDS)
            .chain(NEUTRAL_WORDS)
            .copied()
            .collect();
        let width = model.fused_dim();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (width as f64).sqrt();
        let table = ndarray::Array2::from_shape_simple_fn((vocab.len(), width), || {
            rng.random_range(-scale..scale)
        });
        Self {
            model,
            length: 12,
            stance_bias: 0.5,
            vocab,
            table,
        }
    }

    fn bias(&self, word: &str, stance: StanceLabel) -> f64 {
        let (own, other) = match stance {
            StanceLabel::Favor => (FAVOR_WORDS, AGAINST_WORDS),
            StanceLabel::Against => (AGAINST_WORDS, FAVOR_WORDS),
        };
        if own.contains(&word) {
            self.stance_bias
        } else if other.contains(&word) {
            -self.stance_bias
        } else {
            0.0
        }
    }
}

impl Generator for ToyPrefixGenerator {
    fn id(&self) -> &str {
        "toy-prefix"
    }

    fn generate(&self, request: &GenerationRequest) -> Result<BackendReply, GenerationError> {
        let out = self.model.forward_raw(&request.image, &request.post_text)?;
        let mut h = out.fused.values.clone();
        let mut used = vec![false; self.vocab.len()];
        let mut words = Vec::with_capacity(self.length);
        for _ in 0..self.length.min(self.vocab.len()) {
            let best = (0..self.vocab.len())
                .filter(|&i| !used[i])
                .map(|i| (i, self.table.row(i).dot(&h) + self.bias(self.vocab[i], request.stance)))
                .fold(None::<(usize, f64)>, |acc, (i, s)| match acc {
                    Some((_, b)) if b >= s => acc,
                    _ => Some((i, s)),
                })
                .expect("vocabulary not exhausted");
            used[best.0] = true;
            words.push(self.vocab[best.0]);
            h = h * 0.5 + self.table.row(best.0);
        }
        Ok(BackendReply {
            text: words.join(" "),
            raw: json!({
                "prefix_dim": out.fused.values.len(),
                "prefix_hash": format!("{:016x}", fnv1a64(format!("{:?}", out.fused.values.to_vec()).as_bytes())),
            }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdmg::{FusionMode, SdmgDims};
    use std::sync::atomic::{AtomicU32, Ordering};

    fn request(i: usize, stance: StanceLabel) -> GenerationRequest {
        GenerationRequest {
            request_id: format!("r{i}"),
            sample_id: format!("s{i}"),
            instruction: format!("<image>\nPost: number {i}\nWrite a comment."),
            post_text: format!("number {i}"),
            image: format!("img/{i}.jpg"),
            stance,
            conditioning: None,
            backend: "echo".into(),
        }
    }

    #[test]
    fn echo_contract() {
        let r = generate(&request(1, StanceLabel::Against), &EchoStub, &RetryPolicy::immediate(1)).unwrap();
        assert_eq!(r.text, "[AGAINST] Post: number 1 Write a comment.");
        assert_eq!(r.attempts, 1);
    }

    struct Empty;
    impl Generator for Empty {
        fn id(&self) -> &str {
            "empty"
        }
        fn generate(&self, _: &GenerationRequest) -> Result<BackendReply, GenerationError> {
            Ok(BackendReply {
                text: "  ".into(),
                raw: serde_json::Value::Null,
            })
        }
    }

    struct Flaky(AtomicU32, u32);
    impl Generator for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }
        fn generate(&self, r: &GenerationRequest) -> Result<BackendReply, GenerationError> {
            if self.0.fetch_add(1, Ordering::SeqCst) < self.1 {
                return Err(GenerationError::BackendUnavailable {
                    backend: "flaky".into(),
                    attempts: 1,
                    reason: "503".into(),
                });
            }
            EchoStub.generate(r)
        }
    }

    #[test]
    fn empty_generation() {
        assert!(matches!(
            generate(&request(0, StanceLabel::Favor), &Empty, &RetryPolicy::immediate(3)),
            Err(GenerationError::EmptyGeneration { .. })
        ));
    }

    #[test]
    fn retries_then_gives_up() {
        let ok = generate(
            &request(0, StanceLabel::Favor),
            &Flaky(AtomicU32::new(0), 2),
            &RetryPolicy::immediate(3),
        )
        .unwrap();
        assert_eq!(ok.attempts, 3);
        let err = generate(
            &request(0, StanceLabel::Favor),
            &Flaky(AtomicU32::new(0), 5),
            &RetryPolicy::immediate(3),
        )
        .unwrap_err();
        assert!(matches!(err, GenerationError::BackendUnavailable { attempts: 3, .. }));
    }

    #[test]
    fn batch_pairs_by_request_id() {
        let reqs: Vec<_> = (0..10)
            .map(|i| request(i, if i % 3 == 0 { StanceLabel::Favor } else { StanceLabel::Against }))
            .collect();
        let out = generate_batch(&reqs, &EchoStub, &RetryPolicy::immediate(1), 4);
        assert_eq!(out.len(), 10);
        for (req, resp) in reqs.iter().zip(&out) {
            let resp = resp.as_ref().unwrap();
            assert_eq!(resp.request_id, req.request_id);
            assert_eq!(resp.text, EchoStub::reply_for(&req.instruction, req.stance));
        }
    }

    #[test]
    fn toy_prefix_backend_is_deterministic_and_stance_sensitive() {
        let dims = SdmgDims { d: 8, d_v: 8, d_t: 8 };
        let g = ToyPrefixGenerator::new(SdmgModel::toy(dims, 5, FusionMode::Concat), 5);
        let a = g.generate(&request(3, StanceLabel::Favor)).unwrap();
        assert_eq!(a, g.generate(&request(3, StanceLabel::Favor)).unwrap());
        assert_eq!(a.text.split(' ').count(), 12);
        let b = g.generate(&request(3, StanceLabel::Against)).unwrap();
        assert_ne!(a.text, b.text);
        let favor_hits = a.text.split(' ').filter(|w| FAVOR_WORDS.contains(w)).count();
        let against_hits = a.text.split(' ').filter(|w| AGAINST_WORDS.contains(w)).count();
        assert!(favor_hits > against_hits, "{}", a.text);
    }
}
