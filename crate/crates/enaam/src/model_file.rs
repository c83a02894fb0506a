//! Trained forecaster files: a flat JSON object mapping each parameter group
//! name to an array of numbers, plus `hidden_units` and `normalization`
//! (`[min, max]`).

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use enaam_core::forecast::{ForecastError, LstmModel, Normalization};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: entry `{key}` {reason}")]
    BadEntry {
        path: PathBuf,
        key: &'static str,
        reason: &'static str,
    },
    #[error("{path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: ForecastError,
    },
}

pub fn save_model(path: impl AsRef<Path>, model: &LstmModel) -> Result<(), ModelFileError> {
    let path = path.as_ref();
    let norm = model.normalization();
    let mut map: BTreeMap<&str, Vec<f64>> = model
        .param_groups()
        .into_iter()
        .map(|(name, values)| (name, values.to_vec()))
        .collect();
    map.insert("hidden_units", vec![model.hidden_units() as f64]);
    map.insert("normalization", vec![norm.min, norm.max]);
    let text = serde_json::to_string_pretty(&map).map_err(|source| ModelFileError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text).map_err(|source| ModelFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LstmModel, ModelFileError> {
    let path = path.as_ref();
    let bad = |key, reason| ModelFileError::BadEntry {
        path: path.to_path_buf(),
        key,
        reason,
    };
    let text = fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let map: BTreeMap<String, Vec<f64>> =
        serde_json::from_str(&text).map_err(|source| ModelFileError::Json {
            path: path.to_path_buf(),
            source,
        })?;
    let hidden = match map.get("hidden_units").map(Vec::as_slice) {
        Some(&[h]) if h >= 1.0 && h.fract() == 0.0 => h as usize,
        Some(_) => return Err(bad("hidden_units", "must be one positive integer")),
        None => return Err(bad("hidden_units", "is missing")),
    };
    let norm = match map.get("normalization").map(Vec::as_slice) {
        Some(&[min, max]) => Normalization { min, max },
        Some(_) => return Err(bad("normalization", "must be [min, max]")),
        None => return Err(bad("normalization", "is missing")),
    };
    let groups: Vec<(&str, &[f64])> = map
        .iter()
        .map(|(k, v)| (k.as_str(), v.as_slice()))
        .collect();
    LstmModel::from_parts(hidden, norm, &groups).map_err(|source| ModelFileError::Model {
        path: path.to_path_buf(),
        source,
    })
}
