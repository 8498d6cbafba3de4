//! Model checkpoints: a JSON manifest plus a little-endian parameter blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphJson, HeteroTemporalGraph};
use crate::model::{build_variant, Model, ModelConfig, Normalizer};
use crate::params::ParamStore;
use crate::tensor::Matrix;

pub const FORMAT: &str = "htgnn-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    F32,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub dtype: Dtype,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub config: ModelConfig,
    pub graph: GraphJson,
    pub normalizer: Normalizer,
    pub params: Vec<ParamEntry>,
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes `path` (JSON) and a sibling `.bin` blob.
pub fn save(model: &Model, path: &Path, dtype: Dtype) -> Result<()> {
    let blob = blob_path(path);
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        version: VERSION,
        dtype,
        blob: blob
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| Error::Checkpoint(format!("bad path {}", path.display())))?,
        config: model.config.clone(),
        graph: model.graph.to_json(),
        normalizer: model.normalizer.clone(),
        params: model
            .params
            .iter()
            .map(|(n, m)| ParamEntry {
                name: n.to_string(),
                shape: [m.rows(), m.cols()],
            })
            .collect(),
    };
    let mut bytes = Vec::with_capacity(model.params.num_scalars() * dtype.width());
    for m in model.params.values() {
        for &v in m.data() {
            match dtype {
                Dtype::F64 => bytes.extend_from_slice(&v.to_le_bytes()),
                Dtype::F32 => bytes.extend_from_slice(&(v as f32).to_le_bytes()),
            }
        }
    }
    fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    fs::write(blob, bytes)?;
    Ok(())
}

/// Reads a checkpoint written by [`save`].
pub fn load(path: &Path) -> Result<Model> {
    let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format {} v{}",
            manifest.format, manifest.version
        )));
    }
    let blob_file = path.parent().unwrap_or(Path::new(".")).join(&manifest.blob);
    let bytes = fs::read(&blob_file)?;
    let width = manifest.dtype.width();
    let expected: usize = manifest.params.iter().map(|p| p.shape[0] * p.shape[1]).sum::<usize>() * width;
    if bytes.len() != expected {
        return Err(Error::Checkpoint(format!(
            "blob holds {} bytes, manifest needs {expected}",
            bytes.len()
        )));
    }
    let graph = HeteroTemporalGraph::from_json(manifest.graph)?;
    let mut model = build_variant(&manifest.config, &graph, 0)?;
    let mut params = ParamStore::new();
    let mut chunks = bytes.chunks_exact(width);
    for entry in &manifest.params {
        let n = entry.shape[0] * entry.shape[1];
        let data: Vec<f64> = chunks
            .by_ref()
            .take(n)
            .map(|c| match manifest.dtype {
                Dtype::F64 => f64::from_le_bytes(c.try_into().expect("8-byte chunk")),
                Dtype::F32 => f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64,
            })
            .collect();
        params.insert(entry.name.clone(), Matrix::from_vec(entry.shape[0], entry.shape[1], data));
    }
    model.set_params(params)?;
    model.normalizer = manifest.normalizer;
    Ok(model)
}
