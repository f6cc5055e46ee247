//! Checkpoints: a JSON manifest next to a flat little-endian `f32` blob.
//!
//! `model.json` names every parameter with its shape and offset into
//! `model.bin`; the run configuration is stored alongside so the
//! architecture can be rebuilt.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainedModel};
use crate::datasets::SplitSpec;
use crate::error::{Error, Result};
use crate::tensor::{ParameterStore, Tensor};

const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in elements.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub config: TrainConfig,
    pub num_features: usize,
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_split: Option<SplitSpec>,
    pub parameters: Vec<ParameterEntry>,
    /// File name of the blob, relative to the manifest.
    pub data_file: String,
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes `<path>` (manifest) and `<path>` with extension `.bin`.
pub fn save_checkpoint(path: &Path, model: &TrainedModel) -> Result<()> {
    let blob = blob_path(path);
    let mut bytes = Vec::new();
    let mut parameters = Vec::new();
    let mut offset = 0;
    for (name, p) in model.store.iter() {
        parameters.push(ParameterEntry {
            name: name.to_string(),
            shape: p.value.shape().to_vec(),
            offset,
        });
        offset += p.value.numel();
        bytes.extend(p.value.data().iter().flat_map(|v| v.to_le_bytes()));
    }
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        num_features: model.num_features,
        num_classes: model.num_classes,
        graph_split: model.graph_split.clone(),
        parameters,
        data_file: blob
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("model.bin")
            .to_string(),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&blob, bytes).map_err(|e| Error::io(&blob, e))?;
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::dataset(
            path,
            format!("unsupported checkpoint version {}", manifest.format_version),
        ));
    }
    let blob = path.with_file_name(&manifest.data_file);
    let bytes = fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::dataset(&blob, "length is not a multiple of 4 bytes"));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let mut store = ParameterStore::new();
    for entry in &manifest.parameters {
        let len: usize = entry.shape.iter().product();
        let data = values
            .get(entry.offset..entry.offset + len)
            .ok_or_else(|| Error::dataset(&blob, format!("parameter {} runs past the end", entry.name)))?;
        store.insert(entry.name.clone(), Tensor::new(entry.shape.clone(), data.to_vec())?)?;
    }
    Ok(TrainedModel {
        config: manifest.config,
        num_features: manifest.num_features,
        num_classes: manifest.num_classes,
        store,
        graph_split: manifest.graph_split,
    })
}
