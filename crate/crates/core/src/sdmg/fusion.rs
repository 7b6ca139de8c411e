use ndarray::{concatenate, Array1, ArrayView1, Axis, NdFloat};
use serde::{Deserialize, Serialize};

use super::params::ProjectionParams;
use super::SdmgError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    #[default]
    Concat,
    Add,
}

impl std::str::FromStr for FusionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "concat" => Ok(Self::Concat),
            "add" => Ok(Self::Add),
            other => Err(format!("unknown fusion mode `{other}` (expected concat|add)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedFeature<F = f64> {
    pub mode: FusionMode,
    pub values: Array1<F>,
}

/// `W_t T`: the text CLS vector in the shared space.
pub fn project_text<F: NdFloat>(
    text: ArrayView1<F>,
    params: &ProjectionParams<F>,
) -> Result<Array1<F>, SdmgError> {
    if text.len() != params.d_t() {
        return Err(SdmgError::DimensionMismatch(format!(
            "text feature has length {}, expected {}",
            text.len(),
            params.d_t()
        )));
    }
    Ok(params.w_t.dot(&text))
}

/// Concatenation puts the attended visual half first; addition needs equal lengths.
pub fn fuse<F: NdFloat>(
    visual: ArrayView1<F>,
    text: ArrayView1<F>,
    mode: FusionMode,
) -> Result<FusedFeature<F>, SdmgError> {
    let values = match mode {
        FusionMode::Concat => concatenate(Axis(0), &[visual, text]).expect("1-d concat"),
        FusionMode::Add => {
            if visual.len() != text.len() {
                return Err(SdmgError::DimensionMismatch(format!(
                    "cannot add vectors of length {} and {}",
                    visual.len(),
                    text.len()
                )));
            }
            &visual + &text
        }
    };
    Ok(FusedFeature { mode, values })
}
