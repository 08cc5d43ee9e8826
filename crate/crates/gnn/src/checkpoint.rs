//! Versioned JSON dump of a model's configuration and tensors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use studentgraph_core::Matrix;

use crate::error::{Error, Result};
use crate::model::{GnnConfig, GnnModel};
use crate::params::{Param, ParamStore};

pub const FORMAT: &str = "studentgraph-gnn-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: GnnConfig,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &GnnModel) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            config: model.config.clone(),
            tensors: model
                .store
                .params
                .iter()
                .map(|p| TensorRecord { name: p.name.clone(), shape: [p.value.rows(), p.value.cols()], data: p.value.as_slice().to_vec() })
                .collect(),
        }
    }

    /// Rebuilds the model, checking names and shapes against a fresh init.
    pub fn into_model(self) -> Result<GnnModel> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format {:?}", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let template = GnnModel::new(self.config.clone())?;
        if template.store.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                template.store.len(),
                self.tensors.len()
            )));
        }
        let mut params = Vec::with_capacity(self.tensors.len());
        for (t, expected) in self.tensors.into_iter().zip(&template.store.params) {
            let [r, c] = t.shape;
            if t.name != expected.name || (r, c) != expected.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match {} {:?}",
                    t.name,
                    t.shape,
                    expected.name,
                    expected.value.shape()
                )));
            }
            let value = Matrix::from_vec(r, c, t.data).map_err(|e| Error::Checkpoint(e.to_string()))?;
            params.push(Param { name: t.name, value });
        }
        Ok(GnnModel { config: self.config, store: ParamStore { params } })
    }
}

pub fn save(model: &GnnModel, path: &Path) -> Result<()> {
    let json = serde_json::to_string(&Checkpoint::from_model(model))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<GnnModel> {
    let text = fs::read_to_string(path)?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    ck.into_model()
}
