//! TOML document for SCMs.
//!
//! ```toml
//! format = "cade-scm"
//! version = 1
//! d = 2
//! y_index = 1
//! names = ["a", "b"]
//! adjacency = [0.0, 1.5, 0.0, 0.0]   # row-major, entry (i, j) is edge i -> j
//!
//! [[transforms]]
//! breakpoints = []
//! slopes = [1.0]
//!
//! [[noise]]
//! kind = "gaussian"   # or "uniform" with lo / hi
//! mean = 0.0
//! std = 1.0
//! ```
//!
//! There is one `[[transforms]]` and one `[[noise]]` table per variable.
//! Floats are written in shortest round-trip form, so save then load
//! reproduces every field bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CausalGraph, NoiseSpec, PiecewiseLinear, Scm};
use crate::error::{CadeError, Result};

pub const SCM_FORMAT: &str = "cade-scm";
pub const SCM_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmDocument {
    pub format: String,
    pub version: u32,
    pub d: usize,
    pub y_index: usize,
    pub names: Vec<String>,
    pub adjacency: Vec<f64>,
    pub transforms: Vec<PiecewiseLinear>,
    pub noise: Vec<NoiseSpec>,
}

impl From<&Scm> for ScmDocument {
    fn from(scm: &Scm) -> Self {
        ScmDocument {
            format: SCM_FORMAT.to_string(),
            version: SCM_VERSION,
            d: scm.d(),
            y_index: scm.y_index(),
            names: scm.names().to_vec(),
            adjacency: scm.graph().adjacency().to_vec(),
            transforms: scm.transforms().to_vec(),
            noise: scm.noise().to_vec(),
        }
    }
}

impl TryFrom<ScmDocument> for Scm {
    type Error = CadeError;

    fn try_from(doc: ScmDocument) -> Result<Self> {
        if doc.format != SCM_FORMAT {
            return Err(CadeError::Parse(format!("unexpected format tag {:?}", doc.format)));
        }
        if doc.version != SCM_VERSION {
            return Err(CadeError::Parse(format!("unsupported scm version {}", doc.version)));
        }
        let graph = CausalGraph::new(doc.d, doc.adjacency)?;
        Scm::new(graph, doc.transforms, doc.noise, doc.y_index, doc.names)
    }
}

impl Scm {
    pub fn to_toml(&self) -> String {
        toml::to_string(&ScmDocument::from(self)).expect("scm document serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: ScmDocument = toml::from_str(text).map_err(|e| CadeError::Parse(e.to_string()))?;
        Scm::try_from(doc)
    }
}

pub fn save_scm(scm: &Scm, path: &Path) -> Result<()> {
    std::fs::write(path, scm.to_toml())?;
    Ok(())
}

pub fn load_scm(path: &Path) -> Result<Scm> {
    Scm::from_toml(&std::fs::read_to_string(path)?)
}
