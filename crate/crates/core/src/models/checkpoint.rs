//! JSON checkpoints: architecture plus flattened parameters.
//!
//! ```json
//! {"format": "cade-model", "version": 1,
//!  "arch": {"kind": "mlp", "sizes": [7, 32, 1], "activation": "relu"},
//!  "params": [...]}
//! ```
//!
//! Parameters are listed layer by layer, weights row-major then biases; a
//! linear model lists its weights then its bias.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, LinearModel, MlpModel, Model};
use crate::error::{CadeError, Result};

pub const MODEL_FORMAT: &str = "cade-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArchDoc {
    Linear { inputs: usize, bias: bool },
    Mlp { sizes: Vec<usize>, activation: Activation },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub arch: ArchDoc,
    pub params: Vec<f64>,
}

impl From<&Model> for ModelDocument {
    fn from(m: &Model) -> Self {
        let arch = match m {
            Model::Linear(l) => ArchDoc::Linear {
                inputs: l.input_dim(),
                bias: l.bias.is_some(),
            },
            Model::Mlp(n) => ArchDoc::Mlp {
                sizes: n.sizes().to_vec(),
                activation: n.activation(),
            },
        };
        ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            arch,
            params: m.params(),
        }
    }
}

impl TryFrom<ModelDocument> for Model {
    type Error = CadeError;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        if doc.format != MODEL_FORMAT {
            return Err(CadeError::Parse(format!("unexpected format tag {:?}", doc.format)));
        }
        if doc.version != MODEL_VERSION {
            return Err(CadeError::Parse(format!("unsupported model version {}", doc.version)));
        }
        match doc.arch {
            ArchDoc::Linear { inputs, bias } => {
                let mut m = LinearModel::new(vec![0.0; inputs], bias.then_some(0.0))?;
                m.set_params(&doc.params)?;
                Ok(Model::Linear(m))
            }
            ArchDoc::Mlp { sizes, activation } => {
                Ok(Model::Mlp(MlpModel::from_params(&sizes, activation, &doc.params)?))
            }
        }
    }
}

impl Model {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelDocument::from(self)).expect("model document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| CadeError::Parse(e.to_string()))?;
        Model::try_from(doc)
    }
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_json())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    Model::from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Model::Mlp(MlpModel::init(&[3, 5, 4], Activation::Tanh, &mut rng).unwrap());
        let lin = Model::Linear(LinearModel::new(vec![0.1, 1.0 / 3.0], Some(-2.5e-17)).unwrap());
        for m in [mlp, lin] {
            assert_eq!(Model::from_json(&m.to_json()).unwrap(), m);
        }
    }

    #[test]
    fn rejects_bad_documents() {
        let lin = Model::Linear(LinearModel::new(vec![1.0], None).unwrap());
        let text = lin.to_json();
        assert!(matches!(
            Model::from_json(&text.replace("\"version\":1", "\"version\":9")),
            Err(CadeError::Parse(_))
        ));
        assert!(matches!(
            Model::from_json(&text.replace("[1.0]", "[1.0,2.0]")),
            Err(CadeError::Shape(_))
        ));
    }
}
