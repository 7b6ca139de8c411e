//! JSON tensor container used for parameter checkpoints and CLI tensor inputs.
//!
//! ```json
//! {"format": "stancegen-tensors", "version": 1, "meta": {...},
//!  "tensors": {"W_q": {"shape": [64, 64], "data": [...]}, ...}}
//! ```
//! Data is row-major. Floats are written in shortest round-trip form, so a
//! save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::params::{ProjectionParams, SdmgParams};
use super::SdmgError;

pub const TENSOR_FORMAT: &str = "stancegen-tensors";
pub const TENSOR_VERSION: u32 = 1;

/// Entry names of a parameter checkpoint.
pub const PARAM_NAMES: [&str; 5] = ["W_q", "W_k", "W_v", "W_t", "P_V"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn from_array<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> Self {
        Self {
            shape: a.shape().to_vec(),
            data: a.iter().copied().collect(),
        }
    }

    pub fn to_array(&self) -> Result<ArrayD<f64>, SdmgError> {
        ArrayD::from_shape_vec(IxDyn(&self.shape), self.data.clone())
            .map_err(|e| SdmgError::TensorFile(format!("shape {:?}: {e}", self.shape)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorFile {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Default for TensorFile {
    fn default() -> Self {
        Self {
            format: TENSOR_FORMAT.to_string(),
            version: TENSOR_VERSION,
            meta: BTreeMap::new(),
            tensors: BTreeMap::new(),
        }
    }
}

impl TensorFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert<D: ndarray::Dimension>(&mut self, name: &str, a: &ndarray::Array<f64, D>) {
        self.tensors.insert(name.to_string(), Tensor::from_array(a));
    }

    fn entry(&self, name: &str) -> Result<&Tensor, SdmgError> {
        self.tensors
            .get(name)
            .ok_or_else(|| SdmgError::TensorFile(format!("missing entry `{name}`")))
    }

    pub fn get(&self, name: &str) -> Result<ArrayD<f64>, SdmgError> {
        self.entry(name)?.to_array()
    }

    pub fn get_1d(&self, name: &str) -> Result<Array1<f64>, SdmgError> {
        self.get(name)?
            .into_dimensionality()
            .map_err(|_| SdmgError::TensorFile(format!("`{name}` is not a vector")))
    }

    pub fn get_2d(&self, name: &str) -> Result<Array2<f64>, SdmgError> {
        self.get(name)?
            .into_dimensionality()
            .map_err(|_| SdmgError::TensorFile(format!("`{name}` is not a matrix")))
    }

    /// The only entry, for single-tensor files.
    pub fn sole(&self) -> Result<ArrayD<f64>, SdmgError> {
        match self.tensors.len() {
            1 => self.tensors.values().next().expect("one").to_array(),
            n => Err(SdmgError::TensorFile(format!("expected one tensor, found {n}"))),
        }
    }

    pub fn from_json(s: &str) -> Result<Self, SdmgError> {
        let f: TensorFile =
            serde_json::from_str(s).map_err(|e| SdmgError::TensorFile(e.to_string()))?;
        if f.format != TENSOR_FORMAT {
            return Err(SdmgError::TensorFile(format!("unknown format `{}`", f.format)));
        }
        if f.version != TENSOR_VERSION {
            return Err(SdmgError::TensorFile(format!("unsupported version {}", f.version)));
        }
        for (name, t) in &f.tensors {
            let n: usize = t.shape.iter().product();
            if n != t.data.len() {
                return Err(SdmgError::TensorFile(format!(
                    "`{name}` has shape {:?} but {} values",
                    t.shape,
                    t.data.len()
                )));
            }
        }
        Ok(f)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tensor file serializes")
    }

    pub fn read(path: &Path) -> Result<Self, SdmgError> {
        let s = std::fs::read_to_string(path).map_err(|source| SdmgError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&s)
    }

    pub fn write(&self, path: &Path) -> Result<(), SdmgError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|source| SdmgError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

impl SdmgParams {
    pub fn to_tensor_file(&self) -> TensorFile {
        let mut f = TensorFile::new();
        let dims = self.dims();
        f.meta.insert("d".into(), dims.d.to_string());
        f.meta.insert("d_v".into(), dims.d_v.to_string());
        f.meta.insert("d_t".into(), dims.d_t.to_string());
        f.insert("W_q", &self.projection.w_q);
        f.insert("W_k", &self.projection.w_k);
        f.insert("W_v", &self.projection.w_v);
        f.insert("W_t", &self.projection.w_t);
        f.insert("P_V", &self.prompt);
        f
    }

    pub fn from_tensor_file(f: &TensorFile) -> Result<Self, SdmgError> {
        let params = SdmgParams {
            projection: ProjectionParams {
                w_q: f.get_2d("W_q")?,
                w_k: f.get_2d("W_k")?,
                w_v: f.get_2d("W_v")?,
                w_t: f.get_2d("W_t")?,
            },
            prompt: f.get_1d("P_V")?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<(), SdmgError> {
        self.to_tensor_file().write(path)
    }

    pub fn load(path: &Path) -> Result<Self, SdmgError> {
        Self::from_tensor_file(&TensorFile::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdmg::params::SdmgDims;

    #[test]
    fn params_round_trip_bit_exact() {
        let p = SdmgParams::init(SdmgDims { d: 6, d_v: 5, d_t: 4 }, 9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        p.save(&path).unwrap();
        let back = SdmgParams::load(&path).unwrap();
        assert_eq!(back, p);
        let f = TensorFile::read(&path).unwrap();
        let names: Vec<&str> = f.tensors.keys().map(String::as_str).collect();
        let mut expected = PARAM_NAMES.to_vec();
        expected.sort();
        assert_eq!(names, expected);
        assert_eq!(f.tensors["W_q"].shape, vec![6, 5]);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(TensorFile::from_json(r#"{"format":"x","version":1,"tensors":{}}"#).is_err());
        assert!(TensorFile::from_json(
            r#"{"format":"stancegen-tensors","version":1,"tensors":{"a":{"shape":[2,2],"data":[1,2,3]}}}"#
        )
        .is_err());
        let mut f = TensorFile::new();
        f.insert("W_q", &Array2::<f64>::zeros((2, 2)));
        assert!(SdmgParams::from_tensor_file(&f).is_err());
    }
}
