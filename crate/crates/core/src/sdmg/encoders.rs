//! Visual and text encoders behind small traits, with identity stubs and
//! seeded toy transformers for desk-scale runs.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::transformer::{BlockCache, ToyTransformer};
use super::visual::VisualTokenSequence;
use super::SdmgError;
use crate::digest::fnv1a64;

/// Output of one visual encoder layer, split as `[CLS | prompt slot | patches]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayerOutput {
    pub layer_index: usize,
    pub cls: Array1<f64>,
    /// State at the prompt position (one row).
    pub intermediate: Array2<f64>,
    pub patches: Array2<f64>,
}

impl EncoderLayerOutput {
    fn from_sequence(m: &Array2<f64>, layer_index: usize) -> Self {
        Self {
            layer_index,
            cls: m.row(0).to_owned(),
            intermediate: m.slice(s![1..2, ..]).to_owned(),
            patches: m.slice(s![2.., ..]).to_owned(),
        }
    }

    pub fn to_matrix(&self) -> Array2<f64> {
        let cls = self.cls.view().insert_axis(Axis(0));
        ndarray::concatenate(Axis(0), &[cls, self.intermediate.view(), self.patches.view()])
            .expect("same width")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualEncoding {
    pub layers: Vec<EncoderLayerOutput>,
}

impl VisualEncoding {
    pub fn last(&self) -> &EncoderLayerOutput {
        self.layers.last().expect("at least one layer")
    }

    /// Final-layer CLS, the global visual feature.
    pub fn cls(&self) -> &Array1<f64> {
        &self.last().cls
    }

    /// Final-layer states of every position, used as attention tokens.
    pub fn tokens(&self) -> Array2<f64> {
        self.last().to_matrix()
    }
}

pub trait VisualEncoder: Send + Sync {
    fn encode(&self, seq: &VisualTokenSequence<f64>) -> Result<VisualEncoding, SdmgError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEmbedding {
    pub cls: Array1<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Array2<f64>>,
}

pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, token_ids: &[u32]) -> Result<TextEmbedding, SdmgError>;
}

pub fn encode_visual(
    seq: &VisualTokenSequence<f64>,
    encoder: Option<&dyn VisualEncoder>,
) -> Result<VisualEncoding, SdmgError> {
    encoder.ok_or(SdmgError::EncoderUnavailable)?.encode(seq)
}

pub fn encode_text(
    token_ids: &[u32],
    encoder: Option<&dyn TextEncoder>,
) -> Result<TextEmbedding, SdmgError> {
    let encoder = encoder.ok_or(SdmgError::EncoderUnavailable)?;
    if token_ids.is_empty() {
        return Err(SdmgError::EmptyText);
    }
    encoder.encode(token_ids)
}

/// Passes the input partition through unchanged as a single layer.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityVisualEncoder;

impl VisualEncoder for IdentityVisualEncoder {
    fn encode(&self, seq: &VisualTokenSequence<f64>) -> Result<VisualEncoding, SdmgError> {
        Ok(VisualEncoding {
            layers: vec![EncoderLayerOutput::from_sequence(&seq.to_matrix(), seq.layer_index)],
        })
    }
}

/// Seeded residual transformer over the prompted sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyVisualEncoder {
    pub seed: u64,
    pub net: ToyTransformer,
}

impl ToyVisualEncoder {
    pub fn new(seed: u64, dim: usize, layers: usize) -> Self {
        Self {
            seed,
            net: ToyTransformer::new(seed, dim, layers),
        }
    }

    pub(crate) fn forward_cached(
        &self,
        input: ArrayView2<f64>,
    ) -> (Vec<Array2<f64>>, Vec<BlockCache>) {
        self.net.forward_layers(input)
    }

    pub(crate) fn backward_input(&self, caches: &[BlockCache], d_out: &Array2<f64>) -> Array2<f64> {
        self.net.backward_input(caches, d_out)
    }
}

impl VisualEncoder for ToyVisualEncoder {
    fn encode(&self, seq: &VisualTokenSequence<f64>) -> Result<VisualEncoding, SdmgError> {
        if seq.dim() != self.net.dim {
            return Err(SdmgError::DimensionMismatch(format!(
                "encoder width {} != token width {}",
                self.net.dim,
                seq.dim()
            )));
        }
        let (outs, _) = self.net.forward_layers(seq.to_matrix().view());
        if outs.is_empty() {
            return IdentityVisualEncoder.encode(seq);
        }
        Ok(VisualEncoding {
            layers: outs
                .iter()
                .enumerate()
                .map(|(i, m)| EncoderLayerOutput::from_sequence(m, seq.layer_index + i + 1))
                .collect(),
        })
    }
}

/// Embedding-table lookup with no mixing: the CLS output is the first token's
/// embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityTextEncoder {
    pub embeddings: Array2<f64>,
}

impl IdentityTextEncoder {
    pub fn new(seed: u64, vocab: usize, dim: usize) -> Self {
        Self {
            embeddings: random_table(seed, vocab, dim),
        }
    }

    fn lookup(&self, token_ids: &[u32]) -> Result<Array2<f64>, SdmgError> {
        let vocab = self.embeddings.nrows();
        let mut out = Array2::zeros((token_ids.len(), self.embeddings.ncols()));
        for (i, &id) in token_ids.iter().enumerate() {
            let id = id as usize;
            if id >= vocab {
                return Err(SdmgError::DimensionMismatch(format!(
                    "token id {id} outside vocabulary of {vocab}"
                )));
            }
            out.row_mut(i).assign(&self.embeddings.row(id));
        }
        Ok(out)
    }
}

fn random_table(seed: u64, rows: usize, cols: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

impl TextEncoder for IdentityTextEncoder {
    fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    fn encode(&self, token_ids: &[u32]) -> Result<TextEmbedding, SdmgError> {
        if token_ids.is_empty() {
            return Err(SdmgError::EmptyText);
        }
        let tokens = self.lookup(token_ids)?;
        Ok(TextEmbedding {
            cls: tokens.row(0).to_owned(),
            tokens: Some(tokens),
        })
    }
}

/// Token + position embeddings followed by a seeded transformer; CLS is the
/// first position's final state.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTextEncoder {
    pub table: IdentityTextEncoder,
    pub positions: Array2<f64>,
    pub net: ToyTransformer,
}

impl ToyTextEncoder {
    pub fn new(seed: u64, vocab: usize, dim: usize, max_len: usize, layers: usize) -> Self {
        Self {
            table: IdentityTextEncoder::new(seed, vocab, dim),
            positions: random_table(seed.wrapping_add(1), max_len, dim) * 0.1,
            net: ToyTransformer::new(seed.wrapping_add(2), dim, layers),
        }
    }

    pub fn max_len(&self) -> usize {
        self.positions.nrows()
    }
}

impl TextEncoder for ToyTextEncoder {
    fn dim(&self) -> usize {
        self.net.dim
    }

    fn encode(&self, token_ids: &[u32]) -> Result<TextEmbedding, SdmgError> {
        if token_ids.is_empty() {
            return Err(SdmgError::EmptyText);
        }
        let ids = &token_ids[..token_ids.len().min(self.max_len())];
        let x = self.table.lookup(ids)? + &self.positions.slice(s![..ids.len(), ..]);
        let out = self.net.forward(x.view());
        let cls = out.row(0).to_owned();
        if cls.iter().any(|v| !v.is_finite()) {
            return Err(SdmgError::NonFinite("text CLS".into()));
        }
        Ok(TextEmbedding {
            cls,
            tokens: Some(out),
        })
    }
}

/// Whitespace tokenizer hashing lower-cased words into a fixed vocabulary.
/// Id 0 is reserved for the leading CLS token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingTokenizer {
    pub vocab: usize,
}

pub const CLS_TOKEN: u32 = 0;

impl HashingTokenizer {
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let buckets = (self.vocab.max(2) - 1) as u64;
        std::iter::once(CLS_TOKEN)
            .chain(
                text.split_whitespace()
                    .map(|w| (fnv1a64(w.to_lowercase().as_bytes()) % buckets) as u32 + 1),
            )
            .collect()
    }
}

/// Deterministic stand-in for a patch embedding network: patches are drawn
/// from a generator seeded by the image locator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashPatchEmbedder {
    pub grid: usize,
    pub dim: usize,
}

impl HashPatchEmbedder {
    pub fn embed(&self, image_uri: &str) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(image_uri.as_bytes()));
        Array2::from_shape_simple_fn((self.grid * self.grid, self.dim), || rng.random_range(-1.0..1.0))
    }
}
