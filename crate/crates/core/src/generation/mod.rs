//! Stance-conditioned generation: instruction templating, grouped dataset
//! splitting, fine-tuning config emission and pluggable generator backends.

pub mod backend;
pub mod config;
pub mod dataset;
pub mod instruction;
pub mod split;

pub use backend::{
    generate, generate_batch, BackendReply, ChatGenerator, EchoStub, GeneratedResponse,
    GenerationRequest, Generator, ToyPrefixGenerator,
};
pub use config::FinetuneConfig;
pub use dataset::{instruction_dataset, InstructionRecord};
pub use instruction::{build_instruction, InstructionTemplates, IMAGE_MARKER};
pub use split::{split_dataset, Split};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("unknown template: {0}")]
    UnknownTemplate(String),
    #[error("cannot split an empty corpus")]
    EmptyCorpus,
    #[error("split ratio {0} outside (0, 1)")]
    InvalidRatio(f64),
    #[error("invalid override `{field}`: {reason}")]
    InvalidOverride { field: String, reason: String },
    #[error("backend `{backend}` unavailable after {attempts} attempt(s): {reason}")]
    BackendUnavailable {
        backend: String,
        attempts: u32,
        reason: String,
    },
    #[error("backend `{backend}` returned an empty generation for request `{request_id}`")]
    EmptyGeneration { backend: String, request_id: String },
    #[error("sample `{0}` has no image")]
    MissingImage(String),
    #[error("fused-feature conditioning failed: {0}")]
    Conditioning(#[from] crate::sdmg::SdmgError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
