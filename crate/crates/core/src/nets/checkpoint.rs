//! JSON parameter checkpoints.
//!
//! ```text
//! {
//!   "format": "alice-mlp/1",
//!   "config": { ...MlpConfig... },
//!   "params": [ { "name": "layer0.weight", "shape": [fan_in, fan_out], "values": [...] },
//!               { "name": "layer0.bias",   "shape": [1, fan_out],      "values": [...] }, ... ]
//! }
//! ```
//!
//! Values are row-major. Layers are listed input to output.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mlp, MlpConfig, NetError};
use crate::autodiff::Tensor;

pub const CHECKPOINT_FORMAT: &str = "alice-mlp/1";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: MlpConfig,
    pub params: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn from_mlp(mlp: &Mlp) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            config: mlp.config().clone(),
            params: mlp
                .named_params()
                .into_iter()
                .map(|(name, t)| NamedArray {
                    name,
                    shape: t.shape().to_vec(),
                    values: t.values().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_mlp(self) -> Result<Mlp, NetError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(NetError::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        let params = self
            .params
            .into_iter()
            .map(|a| Tensor::new(a.shape, a.values))
            .collect::<Result<Vec<_>, _>>()?;
        Mlp::from_params(self.config, params)
    }
}

pub fn save_checkpoint(path: &Path, mlp: &Mlp) -> Result<(), NetError> {
    let json = serde_json::to_string(&Checkpoint::from_mlp(mlp)).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| NetError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Mlp, NetError> {
    let text = std::fs::read_to_string(path).map_err(|e| NetError::Checkpoint(format!("{}: {e}", path.display())))?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    ck.into_mlp()
}
