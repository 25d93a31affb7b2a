use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mnist::NeuralPair;
use super::LIBRARY_VERSION;
use crate::error::{precondition, Error, Result};
use crate::linear_pair::{FitMode, LatentMap, LinearAutoencoder, PairModel};
use crate::neural::ConvNetSpec;
use crate::numerics::Matrix;
use crate::pmat;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LinearPair,
    NeuralPair,
    EndToEnd,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub rows: usize,
    pub cols: usize,
}

/// Linear-model details not carried by the matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearMeta {
    pub mode_x: FitMode,
    pub mode_b: FitMode,
    pub maps_mode: FitMode,
    pub tie_warning_x: bool,
    pub tie_warning_b: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub schema_version: u32,
    pub kind: ModelKind,
    pub library_version: String,
    pub files: Vec<FileEntry>,
    /// Configuration the model was generated from.
    pub config: serde_json::Value,
    /// Layer order and shapes of convolutional models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<ConvNetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Linear(PairModel),
    Neural(NeuralPair),
    EndToEnd { spec: ConvNetSpec, params: Vec<f64> },
}

impl SavedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            SavedModel::Linear(_) => ModelKind::LinearPair,
            SavedModel::Neural(_) => ModelKind::NeuralPair,
            SavedModel::EndToEnd { .. } => ModelKind::EndToEnd,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One PMAT file per weight tensor (`out x in*9`) and bias (`out x 1`).
fn network_tensors(prefix: &str, spec: &ConvNetSpec, params: &[f64]) -> Vec<(String, Matrix)> {
    let mut out = Vec::new();
    for (l, layer) in spec.layers.iter().enumerate() {
        let off = spec.param_offset(l);
        let fan_in = layer.in_channels * 9;
        let w = &params[off..off + layer.weight_count()];
        let b = &params[off + layer.weight_count()..off + layer.param_count()];
        out.push((
            format!("{prefix}layer{l}_weight.pmat"),
            Matrix::from_row_slice(layer.out_channels, fan_in, w),
        ));
        out.push((
            format!("{prefix}layer{l}_bias.pmat"),
            Matrix::from_column_slice(layer.out_channels, 1, b),
        ));
    }
    out
}

fn gather_params(
    prefix: &str,
    spec: &ConvNetSpec,
    get: &mut dyn FnMut(&str) -> Result<Matrix>,
) -> Result<Vec<f64>> {
    let mut params = Vec::with_capacity(spec.param_count());
    for (l, layer) in spec.layers.iter().enumerate() {
        let w = get(&format!("{prefix}layer{l}_weight.pmat"))?;
        let b = get(&format!("{prefix}layer{l}_bias.pmat"))?;
        if w.shape() != (layer.out_channels, layer.in_channels * 9)
            || b.shape() != (layer.out_channels, 1)
        {
            return Err(Error::Dimension {
                context: "stored layer tensor",
                expected: format!("{}x{}", layer.out_channels, layer.in_channels * 9),
                actual: format!("{:?}", w.shape()),
            });
        }
        // row-major weights match the flat [out][in][3][3] layout
        params.extend(w.transpose().iter());
        params.extend(b.iter());
    }
    Ok(params)
}

fn tensors(model: &SavedModel) -> Vec<(String, Matrix)> {
    match model {
        SavedModel::Linear(m) => vec![
            ("ae_x_encoder.pmat".into(), m.ae_x.encoder.clone()),
            ("ae_x_decoder.pmat".into(), m.ae_x.decoder.clone()),
            ("ae_x_mixing.pmat".into(), m.ae_x.mixing.clone()),
            ("ae_b_encoder.pmat".into(), m.ae_b.encoder.clone()),
            ("ae_b_decoder.pmat".into(), m.ae_b.decoder.clone()),
            ("ae_b_mixing.pmat".into(), m.ae_b.mixing.clone()),
            ("map_forward.pmat".into(), m.maps.forward.clone()),
            ("map_inverse.pmat".into(), m.maps.inverse.clone()),
        ],
        SavedModel::Neural(p) => {
            let mut t = network_tensors("x_", &p.spec, &p.params_x);
            t.extend(network_tensors("b_", &p.spec, &p.params_b));
            t.push(("map_forward.pmat".into(), p.maps.forward.clone()));
            t.push(("map_inverse.pmat".into(), p.maps.inverse.clone()));
            t
        }
        SavedModel::EndToEnd { spec, params } => network_tensors("", spec, params),
    }
}

/// Writes every matrix as PMAT plus `manifest.json` with per-file SHA-256
/// hashes.
pub fn save_model(
    model: &SavedModel,
    dir: &Path,
    config: &serde_json::Value,
) -> Result<ModelManifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (name, m) in tensors(model) {
        let bytes = pmat::encode(&m);
        std::fs::write(dir.join(&name), &bytes)?;
        files.push(FileEntry {
            sha256: sha256_hex(&bytes),
            name,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let manifest = ModelManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        kind: model.kind(),
        library_version: LIBRARY_VERSION.to_string(),
        files,
        config: config.clone(),
        network: match model {
            SavedModel::Linear(_) => None,
            SavedModel::Neural(p) => Some(p.spec.clone()),
            SavedModel::EndToEnd { spec, .. } => Some(spec.clone()),
        },
        linear: match model {
            SavedModel::Linear(m) => Some(LinearMeta {
                mode_x: m.ae_x.mode,
                mode_b: m.ae_b.mode,
                maps_mode: m.maps.mode,
                tie_warning_x: m.ae_x.tie_warning,
                tie_warning_b: m.ae_b.tie_warning,
            }),
            _ => None,
        },
    };
    std::fs::write(
        dir.join(MANIFEST),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

/// Reads the manifest, checks its schema version, verifies every file hash
/// and rebuilds the model.
pub fn load_model(dir: &Path) -> Result<(SavedModel, ModelManifest)> {
    let raw: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST))?)?;
    let found = raw
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Config("manifest lacks schema_version".into()))?;
    if found != MANIFEST_SCHEMA_VERSION as u64 {
        return Err(Error::SchemaVersion {
            found: found as u32,
            supported: MANIFEST_SCHEMA_VERSION,
        });
    }
    let manifest: ModelManifest = serde_json::from_value(raw)?;

    let mut get = |name: &str| -> Result<Matrix> {
        let entry = manifest
            .files
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::Config(format!("manifest does not list {name}")))?;
        let path = dir.join(name);
        let bytes = std::fs::read(&path)?;
        let actual = sha256_hex(&bytes);
        if actual != entry.sha256 {
            return Err(Error::HashMismatch {
                file: path.display().to_string(),
                expected: entry.sha256.clone(),
                actual,
            });
        }
        let m = pmat::decode(&bytes, &path)?;
        if m.shape() != (entry.rows, entry.cols) {
            return Err(Error::Dimension {
                context: "stored matrix",
                expected: format!("{}x{}", entry.rows, entry.cols),
                actual: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        Ok(m)
    };
    // every listed file is verified, even ones a model kind does not read
    for f in &manifest.files {
        get(&f.name)?;
    }

    let model = match manifest.kind {
        ModelKind::LinearPair => {
            let meta = manifest
                .linear
                .ok_or_else(|| Error::Config("linear model without linear metadata".into()))?;
            let ae = |enc: Matrix, dec: Matrix, mix: Matrix, mode, tie| LinearAutoencoder {
                latent_dim: enc.nrows(),
                encoder: enc,
                decoder: dec,
                mixing: mix,
                mode,
                tie_warning: tie,
            };
            let ae_x = ae(
                get("ae_x_encoder.pmat")?,
                get("ae_x_decoder.pmat")?,
                get("ae_x_mixing.pmat")?,
                meta.mode_x,
                meta.tie_warning_x,
            );
            let ae_b = ae(
                get("ae_b_encoder.pmat")?,
                get("ae_b_decoder.pmat")?,
                get("ae_b_mixing.pmat")?,
                meta.mode_b,
                meta.tie_warning_b,
            );
            let maps = LatentMap::new(
                get("map_forward.pmat")?,
                get("map_inverse.pmat")?,
                meta.maps_mode,
            )?;
            SavedModel::Linear(PairModel::new(ae_x, ae_b, maps)?)
        }
        ModelKind::NeuralPair => {
            let spec = network_spec(&manifest)?;
            let params_x = gather_params("x_", &spec, &mut get)?;
            let params_b = gather_params("b_", &spec, &mut get)?;
            let maps = LatentMap::new(
                get("map_forward.pmat")?,
                get("map_inverse.pmat")?,
                FitMode::Empirical,
            )?;
            SavedModel::Neural(NeuralPair {
                spec,
                params_x,
                params_b,
                maps,
            })
        }
        ModelKind::EndToEnd => {
            let spec = network_spec(&manifest)?;
            let params = gather_params("", &spec, &mut get)?;
            SavedModel::EndToEnd { spec, params }
        }
    };
    Ok((model, manifest))
}

fn network_spec(manifest: &ModelManifest) -> Result<ConvNetSpec> {
    let spec = manifest
        .network
        .clone()
        .ok_or_else(|| Error::Config("network model without layer list".into()))?;
    spec.validate()?;
    if spec.param_count() == 0 {
        return precondition("network has no parameters");
    }
    Ok(spec)
}
