//! Cross-modal fusion: visual token assembly with a prompt vector, text
//! encoding, task-sensitive attention and fusion, plus gradient checking.

pub mod attention;
pub mod checkpoint;
pub mod encoders;
pub mod fusion;
pub mod grad;
pub mod model;
pub mod params;
pub mod transformer;
pub mod visual;

pub use attention::{
    project_qkv, softmax, tsa_attend_literal, tsa_attend_pooled, PooledAttention, Qkv,
};
pub use checkpoint::{Tensor, TensorFile};
pub use encoders::{
    encode_text, encode_visual, EncoderLayerOutput, HashPatchEmbedder, HashingTokenizer,
    IdentityTextEncoder, IdentityVisualEncoder, TextEmbedding, TextEncoder, ToyTextEncoder,
    ToyVisualEncoder, VisualEncoder, VisualEncoding,
};
pub use fusion::{fuse, project_text, FusedFeature, FusionMode};
pub use grad::{grad_check, GradCheckConfig, GradReport, GradTarget};
pub use model::{SdmgModel, SdmgOutput};
pub use params::{ProjectionParams, SdmgDims, SdmgParams};
pub use visual::{build_visual_input, VisualTokenSequence};

#[derive(Debug, thiserror::Error)]
pub enum SdmgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("encoder unavailable")]
    EncoderUnavailable,
    #[error("empty text input")]
    EmptyText,
    #[error("non-finite gradient at {0}")]
    NonFiniteGradient(String),
    #[error("finite-difference step {0} outside [1e-7, 1e-3]")]
    InvalidEps(f64),
    #[error("tensor file: {0}")]
    TensorFile(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
