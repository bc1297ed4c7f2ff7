//! Named-tensor manifest used for parameter checkpoints.
//!
//! The on-disk form is JSON:
//!
//! ```json
//! { "format": "oodlinker-params", "version": 1,
//!   "meta": { ... },
//!   "tensors": [ { "name": "phi1.w_agg1", "shape": [64, 41], "values": [ ... ] } ] }
//! ```
//!
//! Values are written with shortest round-trip formatting and parsed exactly,
//! so save followed by load reproduces every bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MANIFEST_FORMAT: &str = "oodlinker-params";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
    pub tensors: Vec<NamedTensor>,
}

impl Manifest {
    pub fn new() -> Self {
        Manifest {
            format: MANIFEST_FORMAT.to_string(),
            version: MANIFEST_VERSION,
            meta: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: &Tensor) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape: t.shape().to_vec(),
            values: t.data().to_vec(),
        });
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        let entry = self
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        Tensor::new(entry.shape.clone(), entry.values.clone())
            .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("malformed manifest: {e}")))?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported manifest {} v{}",
                m.format, m.version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Manifest::from_json(&text)
    }
}

impl Default for Manifest {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(values in prop::collection::vec(
            prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..40)) {
            let t = Tensor::vector(values);
            let mut m = Manifest::new();
            m.push("w", &t);
            let back = Manifest::from_json(&m.to_json()).unwrap();
            prop_assert!(back.tensor("w").unwrap().bit_eq(&t));
        }
    }

    #[test]
    fn missing_tensor_is_checkpoint_error() {
        let m = Manifest::new();
        assert!(matches!(m.tensor("nope"), Err(Error::Checkpoint(_))));
        assert!(matches!(Manifest::from_json("{not json"), Err(Error::Checkpoint(_))));
    }
}
