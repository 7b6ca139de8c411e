use ndarray::{Array1, Array2, NdFloat};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::transformer::uniform_matrix;
use super::SdmgError;

/// Learnable projections into the shared `d`-dimensional space.
///
/// `w_q`, `w_v`: `d x d_v`; `w_k`, `w_t`: `d x d_t`. `w_t` maps the text CLS
/// vector into `d` for fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParams<F = f64> {
    pub w_q: Array2<F>,
    pub w_k: Array2<F>,
    pub w_v: Array2<F>,
    pub w_t: Array2<F>,
}

impl<F: NdFloat> ProjectionParams<F> {
    pub fn new(
        w_q: Array2<F>,
        w_k: Array2<F>,
        w_v: Array2<F>,
        w_t: Array2<F>,
    ) -> Result<Self, SdmgError> {
        let p = Self { w_q, w_k, w_v, w_t };
        p.validate()?;
        Ok(p)
    }

    /// Square identity projections (`d = d_v = d_t`).
    pub fn identity(d: usize) -> Self {
        Self {
            w_q: Array2::eye(d),
            w_k: Array2::eye(d),
            w_v: Array2::eye(d),
            w_t: Array2::eye(d),
        }
    }

    pub fn d(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn d_v(&self) -> usize {
        self.w_q.ncols()
    }

    pub fn d_t(&self) -> usize {
        self.w_k.ncols()
    }

    pub fn validate(&self) -> Result<(), SdmgError> {
        let (d, d_v, d_t) = (self.d(), self.d_v(), self.d_t());
        let check = |name: &str, m: &Array2<F>, rows: usize, cols: usize| {
            if m.dim() != (rows, cols) {
                return Err(SdmgError::DimensionMismatch(format!(
                    "{name} is {:?}, expected ({rows}, {cols})",
                    m.dim()
                )));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(SdmgError::NonFinite(name.to_string()));
            }
            Ok(())
        };
        if d == 0 {
            return Err(SdmgError::DimensionMismatch("projection dim is zero".into()));
        }
        check("W_q", &self.w_q, d, d_v)?;
        check("W_k", &self.w_k, d, d_t)?;
        check("W_v", &self.w_v, d, d_v)?;
        check("W_t", &self.w_t, d, d_t)
    }

    pub fn cast<G: NdFloat>(&self, f: impl Fn(F) -> G + Copy) -> ProjectionParams<G> {
        ProjectionParams {
            w_q: self.w_q.mapv(f),
            w_k: self.w_k.mapv(f),
            w_v: self.w_v.mapv(f),
            w_t: self.w_t.mapv(f),
        }
    }
}

/// Projection weights plus the visual prompt vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdmgParams {
    pub projection: ProjectionParams<f64>,
    pub prompt: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SdmgDims {
    pub d: usize,
    pub d_v: usize,
    pub d_t: usize,
}

impl Default for SdmgDims {
    fn default() -> Self {
        Self {
            d: 64,
            d_v: 64,
            d_t: 64,
        }
    }
}

pub const PROMPT_INIT_STD: f64 = 0.02;

impl SdmgParams {
    /// Projections ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); prompt ~ N(0, 0.02^2).
    pub fn init(dims: SdmgDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = ProjectionParams {
            w_q: uniform_matrix(&mut rng, dims.d, dims.d_v, dims.d_v),
            w_k: uniform_matrix(&mut rng, dims.d, dims.d_t, dims.d_t),
            w_v: uniform_matrix(&mut rng, dims.d, dims.d_v, dims.d_v),
            w_t: uniform_matrix(&mut rng, dims.d, dims.d_t, dims.d_t),
        };
        let normal = Normal::new(0.0, PROMPT_INIT_STD).expect("valid std");
        let prompt = Array1::from_shape_simple_fn(dims.d_v, || normal.sample(&mut rng));
        Self { projection, prompt }
    }

    pub fn dims(&self) -> SdmgDims {
        SdmgDims {
            d: self.projection.d(),
            d_v: self.projection.d_v(),
            d_t: self.projection.d_t(),
        }
    }

    pub fn validate(&self) -> Result<(), SdmgError> {
        self.projection.validate()?;
        if self.prompt.len() != self.projection.d_v() {
            return Err(SdmgError::DimensionMismatch(format!(
                "P_V has length {}, expected {}",
                self.prompt.len(),
                self.projection.d_v()
            )));
        }
        if self.prompt.iter().any(|x| !x.is_finite()) {
            return Err(SdmgError::NonFinite("P_V".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_respects_scales_and_shapes() {
        let dims = SdmgDims { d: 16, d_v: 32, d_t: 8 };
        let p = SdmgParams::init(dims, 7);
        p.validate().unwrap();
        assert_eq!(p.dims(), dims);
        let bound_v = 1.0 / (32f64).sqrt();
        assert!(p.projection.w_q.iter().all(|x| x.abs() <= bound_v));
        let bound_t = 1.0 / (8f64).sqrt();
        assert!(p.projection.w_k.iter().all(|x| x.abs() <= bound_t));
        // 0.02 std: nothing near 0.2 in 32 draws.
        assert!(p.prompt.iter().all(|x| x.abs() < 0.15));
        assert_eq!(SdmgParams::init(dims, 7), p);
    }

    #[test]
    fn validation_catches_bad_shapes() {
        let mut p = ProjectionParams::<f64>::identity(4);
        p.w_k = Array2::zeros((3, 4));
        assert!(p.validate().is_err());
        let mut p = ProjectionParams::<f64>::identity(4);
        p.w_v[[0, 0]] = f64::NAN;
        assert!(matches!(p.validate(), Err(SdmgError::NonFinite(_))));
    }
}
