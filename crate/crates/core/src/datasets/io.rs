//! CSV export and import with a JSON metadata sidecar.
//!
//! `write_dataset(ds, "train.csv")` writes the table plus `train.csv.meta.json`.
//! The header row is the feature column names followed by the target name
//! and, for classification data, `label`. Floats use Rust's shortest
//! round-trip formatting, so import reproduces the dataset exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, GeneratorSpec};
use crate::error::{CadeError, Result};
use crate::matrix::Matrix;
use crate::scm::CounterfactualEngine;

pub const GENERATOR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator_version: u32,
    pub spec: GeneratorSpec,
    pub seed: u64,
    pub n: usize,
    pub column_names: Vec<String>,
    pub target_name: String,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_dataset(ds: &Dataset, csv_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path)?;
    let mut header = ds.column_names.clone();
    header.push(ds.target_name.clone());
    if ds.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.features.row(i).iter().map(f64::to_string).collect();
        rec.push(ds.target[i].to_string());
        if let Some(l) = &ds.labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    let meta = DatasetMeta {
        generator_version: GENERATOR_VERSION,
        spec: ds.spec,
        seed: ds.seed,
        n: ds.n(),
        column_names: ds.column_names.clone(),
        target_name: ds.target_name.clone(),
    };
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    std::fs::write(sidecar_path(csv_path), json)?;
    Ok(())
}

pub fn read_dataset(csv_path: &Path) -> Result<Dataset> {
    let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(csv_path))?)
        .map_err(|e| CadeError::Parse(format!("dataset metadata: {e}")))?;
    if meta.generator_version != GENERATOR_VERSION {
        return Err(CadeError::Parse(format!(
            "unsupported generator version {}",
            meta.generator_version
        )));
    }
    let (engine, feature_vars) = meta.spec.engine()?;
    let names = engine.names();
    let expected: Vec<String> = feature_vars.iter().map(|&v| names[v].clone()).collect();
    if expected != meta.column_names {
        return Err(CadeError::Parse("metadata columns do not match the generator".into()));
    }
    let classify = matches!(meta.spec, GeneratorSpec::Pendulum { .. });

    let mut r = csv::Reader::from_path(csv_path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let mut want = meta.column_names.clone();
    want.push(meta.target_name.clone());
    if classify {
        want.push("label".into());
    }
    if header != want {
        return Err(CadeError::Parse(format!("header {header:?}, expected {want:?}")));
    }
    let p = meta.column_names.len();
    let mut feats = Vec::with_capacity(meta.n * p);
    let mut target = Vec::with_capacity(meta.n);
    let mut labels = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CadeError::Parse(format!("row {}: bad number {:?}", line + 1, &rec[k])))
        };
        for k in 0..p {
            feats.push(num(k)?);
        }
        target.push(num(p)?);
        if classify {
            labels.push(
                rec[p + 1]
                    .parse::<usize>()
                    .map_err(|e| CadeError::Parse(format!("row {}: label: {e}", line + 1)))?,
            );
        }
    }
    if target.len() != meta.n || target.is_empty() {
        return Err(CadeError::Parse(format!(
            "expected {} rows, found {}",
            meta.n,
            target.len()
        )));
    }
    Ok(Dataset {
        spec: meta.spec,
        seed: meta.seed,
        features: Matrix::from_vec(meta.n, p, feats)?,
        target,
        labels: classify.then_some(labels),
        column_names: meta.column_names,
        target_name: meta.target_name,
        feature_vars,
        engine,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_pendulum_latent, gen_syn_measurement};

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for ds in [gen_syn_measurement(40, 2).unwrap(), gen_pendulum_latent(40, 0.15, 2).unwrap()] {
            let path = dir.path().join(format!("{}.csv", ds.spec.name()));
            write_dataset(&ds, &path).unwrap();
            assert_eq!(read_dataset(&path).unwrap(), ds);
        }
    }

    #[test]
    fn header_mismatch_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_syn_measurement(3, 2).unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&ds, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replacen("CP", "XX", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(read_dataset(&path), Err(CadeError::Parse(_))));
    }
}
