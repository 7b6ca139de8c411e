//! End-to-end fusion head: patches and token ids in, fused feature out.

use ndarray::{Array1, ArrayView1, ArrayView2};

use super::attention::{tsa_attend_pooled, PooledAttention};
use super::encoders::{
    encode_text, encode_visual, HashPatchEmbedder, HashingTokenizer, TextEncoder, ToyTextEncoder,
    ToyVisualEncoder, VisualEncoder,
};
use super::fusion::{fuse, project_text, FusedFeature, FusionMode};
use super::params::{ProjectionParams, SdmgDims, SdmgParams};
use super::visual::build_visual_input;
use super::SdmgError;

#[derive(Debug, Clone, PartialEq)]
pub struct SdmgOutput {
    pub fused: FusedFeature<f64>,
    pub attention: PooledAttention<f64>,
    pub visual_cls: Array1<f64>,
    pub text_cls: Array1<f64>,
}

/// Pooled attention over `visual_tokens` against `text`, then fusion with the
/// projected text.
pub fn fuse_features(
    visual_tokens: ArrayView2<f64>,
    text: ArrayView1<f64>,
    params: &ProjectionParams<f64>,
    mode: FusionMode,
) -> Result<(FusedFeature<f64>, PooledAttention<f64>), SdmgError> {
    let attn = tsa_attend_pooled(visual_tokens, text, params)?;
    let t_proj = project_text(text, params)?;
    let fused = fuse(attn.output.view(), t_proj.view(), mode)?;
    Ok((fused, attn))
}

pub struct SdmgModel {
    pub params: SdmgParams,
    pub visual: Box<dyn VisualEncoder>,
    pub text: Box<dyn TextEncoder>,
    pub mode: FusionMode,
}

pub const TOY_VOCAB: usize = 1024;
pub const TOY_MAX_LEN: usize = 160;
pub const TOY_LAYERS: usize = 2;
pub const TOY_GRID: usize = 4;

impl SdmgModel {
    /// Seeded desk-scale model with toy encoders of `TOY_LAYERS` layers.
    pub fn toy(dims: SdmgDims, seed: u64, mode: FusionMode) -> Self {
        Self {
            params: SdmgParams::init(dims, seed),
            visual: Box::new(ToyVisualEncoder::new(seed.wrapping_add(100), dims.d_v, TOY_LAYERS)),
            text: Box::new(ToyTextEncoder::new(
                seed.wrapping_add(200),
                TOY_VOCAB,
                dims.d_t,
                TOY_MAX_LEN,
                TOY_LAYERS,
            )),
            mode,
        }
    }

    /// Length of the fused feature under the model's fusion mode.
    pub fn fused_dim(&self) -> usize {
        match self.mode {
            FusionMode::Concat => 2 * self.params.projection.d(),
            FusionMode::Add => self.params.projection.d(),
        }
    }

    pub fn forward(&self, patches: ArrayView2<f64>, token_ids: &[u32]) -> Result<SdmgOutput, SdmgError> {
        let seq = build_visual_input(patches, self.params.prompt.view())?;
        let visual = encode_visual(&seq, Some(self.visual.as_ref()))?;
        let text = encode_text(token_ids, Some(self.text.as_ref()))?;
        let tokens = visual.tokens();
        let (fused, attention) =
            fuse_features(tokens.view(), text.cls.view(), &self.params.projection, self.mode)?;
        Ok(SdmgOutput {
            fused,
            attention,
            visual_cls: visual.cls().clone(),
            text_cls: text.cls,
        })
    }

    /// Hash-derived patches for `image_uri` and hashed tokens for `text`.
    pub fn forward_raw(&self, image_uri: &str, text: &str) -> Result<SdmgOutput, SdmgError> {
        let dims = self.params.dims();
        let patches = HashPatchEmbedder {
            grid: TOY_GRID,
            dim: dims.d_v,
        }
        .embed(image_uri);
        let ids = HashingTokenizer { vocab: TOY_VOCAB }.encode(text);
        self.forward(patches.view(), &ids)
    }
}
