use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis, NdFloat};
use serde::{Deserialize, Serialize};

use super::SdmgError;

/// Visual encoder input sequence `[CLS, prompt, patch_1 .. patch_{N*N}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualTokenSequence<F = f64> {
    pub cls: Array1<F>,
    /// Learnable target prompt vector.
    pub prompt: Array1<F>,
    pub patches: Array2<F>,
    pub layer_index: usize,
}

impl<F: NdFloat> VisualTokenSequence<F> {
    pub fn dim(&self) -> usize {
        self.cls.len()
    }

    pub fn grid(&self) -> usize {
        (self.patches.nrows() as f64).sqrt().round() as usize
    }

    pub fn len(&self) -> usize {
        self.patches.nrows() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Stacked `(N*N + 2) x d_v` matrix in sequence order.
    pub fn to_matrix(&self) -> Array2<F> {
        let d = self.dim();
        let cls = self.cls.view().into_shape_with_order((1, d)).expect("row");
        let prompt = self.prompt.view().into_shape_with_order((1, d)).expect("row");
        concatenate(Axis(0), &[cls, prompt, self.patches.view()]).expect("same width")
    }

    /// Splits a sequence-shaped matrix back into `[CLS | prompt slot | patches]`.
    pub fn from_matrix(m: ArrayView2<F>, layer_index: usize) -> Result<Self, SdmgError> {
        if m.nrows() < 3 {
            return Err(SdmgError::DimensionMismatch(format!(
                "sequence needs at least 3 rows, got {}",
                m.nrows()
            )));
        }
        Ok(Self {
            cls: m.row(0).to_owned(),
            prompt: m.row(1).to_owned(),
            patches: m.slice(s![2.., ..]).to_owned(),
            layer_index,
        })
    }
}

fn perfect_square_root(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// Assembles the prompted input sequence. CLS starts as zeros.
pub fn build_visual_input<F: NdFloat>(
    patches: ArrayView2<F>,
    prompt: ArrayView1<F>,
) -> Result<VisualTokenSequence<F>, SdmgError> {
    let d = prompt.len();
    if patches.ncols() != d {
        return Err(SdmgError::DimensionMismatch(format!(
            "patch width {} != prompt width {d}",
            patches.ncols()
        )));
    }
    if patches.nrows() == 0 || perfect_square_root(patches.nrows()).is_none() {
        return Err(SdmgError::DimensionMismatch(format!(
            "patch count {} is not N*N for a positive grid size N",
            patches.nrows()
        )));
    }
    Ok(VisualTokenSequence {
        cls: Array1::zeros(d),
        prompt: prompt.to_owned(),
        patches: patches.to_owned(),
        layer_index: 0,
    })
}
