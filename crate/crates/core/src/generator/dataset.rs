//! On-disk dataset: raw little-endian f32 patches plus a JSON sidecar.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::degrade::PATCH_SIZE;
use super::model::{sample_model, Kind};
use super::{generate_replicas, AcquisitionRanges, LabeledPatch};
use crate::error::{Error, Result};
use crate::image::CT_SPACING;
use crate::rng::{stream, Stage, MODEL_LEVEL};

pub const PATCH_FILE: &str = "patches.f32";
pub const SIDECAR_FILE: &str = "meta.json";
pub const SIDECAR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub kind: Kind,
    pub n_models: u64,
    pub replicas: u32,
    pub seed: u64,
    pub acquisition: AcquisitionRanges,
}

impl GenConfig {
    pub fn new(kind: Kind, n_models: u64, replicas: u32, seed: u64) -> Self {
        Self {
            kind,
            n_models,
            replicas,
            seed,
            acquisition: AcquisitionRanges::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub model_id: u64,
    pub replica_id: u32,
    pub lumen_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: u32,
    pub kind: Kind,
    pub n_models: u64,
    pub m_replicas: u32,
    pub spacing_mm: f64,
    /// `[height, width]` of every patch.
    pub patch_shape: [usize; 2],
    pub labels: Vec<LabelRecord>,
}

/// Patches in model-major, replica-minor order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: Kind,
    pub n_models: u64,
    pub m_replicas: u32,
    pub patches: Vec<LabeledPatch>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Consecutive replica groups, one slice per model.
    pub fn groups(&self) -> impl Iterator<Item = &[LabeledPatch]> {
        self.patches.chunks(self.m_replicas.max(1) as usize)
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            version: SIDECAR_VERSION,
            kind: self.kind,
            n_models: self.n_models,
            m_replicas: self.m_replicas,
            spacing_mm: CT_SPACING,
            patch_shape: [PATCH_SIZE, PATCH_SIZE],
            labels: self
                .patches
                .iter()
                .map(|p| LabelRecord {
                    model_id: p.model_id,
                    replica_id: p.replica_id,
                    lumen_mm: p.label_lumen,
                    wall_mm: p.label_wall,
                })
                .collect(),
        }
    }
}

/// Generates every patch in memory. Models are processed in parallel; each
/// `(model, replica)` owns its random streams, so the output is independent
/// of the worker count.
pub fn generate_patches(config: &GenConfig) -> Result<Dataset> {
    if config.replicas == 0 {
        return Err(Error::invalid("replica count must be at least 1"));
    }
    let per_model: Vec<Vec<LabeledPatch>> = (0..config.n_models)
        .into_par_iter()
        .map(|model_id| {
            let mut rng = stream(config.seed, model_id, MODEL_LEVEL, Stage::Model);
            let model = sample_model(config.kind, &mut rng);
            generate_replicas(&model, config.replicas, &config.acquisition, config.seed, model_id)
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        kind: config.kind,
        n_models: config.n_models,
        m_replicas: config.replicas,
        patches: per_model.into_iter().flatten().collect(),
    })
}

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let patch_path = dir.join(PATCH_FILE);
    let file = fs::File::create(&patch_path).map_err(|e| Error::io(&patch_path, e))?;
    let mut out = BufWriter::new(file);
    for p in &dataset.patches {
        for v in &p.pixels {
            out.write_all(&v.to_le_bytes()).map_err(|e| Error::io(&patch_path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(&patch_path, e))?;

    let meta_path = dir.join(SIDECAR_FILE);
    let json = serde_json::to_vec_pretty(&dataset.sidecar()).map_err(|source| Error::Json {
        path: meta_path.clone(),
        source,
    })?;
    fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join(SIDECAR_FILE);
    let raw = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Sidecar = serde_json::from_slice(&raw).map_err(|source| Error::Json {
        path: meta_path.clone(),
        source,
    })?;
    let bad = |reason: String| Error::Format {
        path: meta_path.clone(),
        reason,
    };
    if meta.version != SIDECAR_VERSION {
        return Err(bad(format!("unsupported version {}", meta.version)));
    }
    if meta.patch_shape != [PATCH_SIZE, PATCH_SIZE] {
        return Err(bad(format!("unsupported patch shape {:?}", meta.patch_shape)));
    }
    let expected = meta.n_models * meta.m_replicas as u64;
    if meta.labels.len() as u64 != expected {
        return Err(bad(format!("{} labels for {expected} patches", meta.labels.len())));
    }

    let patch_path = dir.join(PATCH_FILE);
    let bytes = fs::read(&patch_path).map_err(|e| Error::io(&patch_path, e))?;
    let px = PATCH_SIZE * PATCH_SIZE;
    if bytes.len() != meta.labels.len() * px * 4 {
        return Err(Error::Format {
            path: patch_path,
            reason: format!("{} bytes for {} patches", bytes.len(), meta.labels.len()),
        });
    }
    let patches = meta
        .labels
        .iter()
        .zip(bytes.chunks_exact(px * 4))
        .map(|(l, chunk)| LabeledPatch {
            pixels: chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
            label_lumen: l.lumen_mm,
            label_wall: l.wall_mm,
            kind: meta.kind,
            model_id: l.model_id,
            replica_id: l.replica_id,
        })
        .collect();
    Ok(Dataset {
        kind: meta.kind,
        n_models: meta.n_models,
        m_replicas: meta.m_replicas,
        patches,
    })
}

/// Generates and writes a dataset to `dir`.
pub fn generate_dataset(config: &GenConfig, dir: &Path) -> Result<Dataset> {
    let ds = generate_patches(config)?;
    write_dataset(&ds, dir)?;
    Ok(ds)
}
