use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::params::ParamStore;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "incivility-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned model container: configuration echo, vocabulary, named
/// parameter tensors (batch-norm running statistics included as
/// non-trainable entries) and the seed. Floats are written as shortest
/// round-trip decimals, so save/load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: String,
    pub seed: u64,
    pub config: Value,
    pub vocab: Value,
    #[serde(default)]
    pub extra: Value,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(model: &str, seed: u64, config: Value, vocab: Value, params: ParamStore) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: model.into(),
            seed,
            config,
            vocab,
            extra: Value::Null,
            params,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(raw: &[u8]) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(raw)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}",
                ck.version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&raw)
    }

    pub fn expect_model(&self, model: &str) -> Result<()> {
        if self.model != model {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds a {} model, expected {model}",
                self.model
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut ps = ParamStore::new();
        ps.add(
            "w",
            Tensor::vector(vec![0.1 + 0.2, -1e-300, 3.0, f64::MIN_POSITIVE]),
            true,
        );
        ps.add("bn.running_var", Tensor::vector(vec![1.0 / 3.0]), false);
        let ck = Checkpoint::new("toy", 7, serde_json::json!({"lr": 0.05}), Value::Null, ps);
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_unknown_version() {
        let ck = Checkpoint::new("toy", 0, Value::Null, Value::Null, ParamStore::new());
        let mut v = serde_json::to_value(&ck).unwrap();
        v["version"] = 99.into();
        assert!(Checkpoint::from_bytes(v.to_string().as_bytes()).is_err());
    }
}
