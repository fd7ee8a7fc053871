//! Binary model files with a JSON sidecar.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "MAPMLBIN" | u32 version | u32 d | u32 m | f64[d*d] metric (row-major)
//!            | f64[m*d] latents (row-major) | u32[m] latent labels
//! ```
//!
//! The sidecar (same path, `.meta` extension) holds the configuration, the
//! loss trace and the label names.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::driver::{TrainResult, WallTimes};
use crate::error::{Error, Result};
use crate::eval::{ReferenceMode, ReferenceSet};
use crate::metric::Metric;

pub const MAGIC: &[u8; 8] = b"MAPMLBIN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format_version: u32,
    /// Trainer that produced the model (`mapml` or `random-triplet`).
    pub method: String,
    pub config: TrainConfig,
    pub loss_trace: Vec<f64>,
    pub label_names: Vec<String>,
    pub cluster_margins: Vec<f64>,
    pub wall_times: WallTimes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub metric: Metric,
    pub latents: Array2<f64>,
    pub latent_labels: Vec<usize>,
    /// Absent when the sidecar is missing.
    pub meta: Option<ModelMeta>,
}

impl ModelFile {
    /// Label names from the sidecar, or the class ids as text.
    pub fn label_names(&self) -> Vec<String> {
        match &self.meta {
            Some(meta) => meta.label_names.clone(),
            None => {
                let classes = self.latent_labels.iter().max().map_or(0, |&r| r + 1);
                (0..classes).map(|r| r.to_string()).collect()
            }
        }
    }

    /// The stored latent examples as k-NN references.
    pub fn latent_references(&self) -> Result<ReferenceSet> {
        ReferenceSet::new(
            self.latents.clone(),
            self.latent_labels.clone(),
            self.label_names(),
            ReferenceMode::Latent,
        )
    }
}

/// Sidecar path for a model file.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

/// Writes the model file and its sidecar.
pub fn save_model(path: impl AsRef<Path>, result: &TrainResult, cfg: &TrainConfig, method: &str) -> Result<()> {
    let path = path.as_ref();
    let d = result.metric.dim();
    let model = &result.latent_model;
    let m = model.len();
    if m > 0 && model.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: model.dim() });
    }
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::format(format!("{what} {v} does not fit the model format")))
    };
    let mut out = Vec::with_capacity(20 + 8 * (d * d + m * d) + 4 * m);
    out.extend_from_slice(MAGIC);
    out.extend(FORMAT_VERSION.to_le_bytes());
    out.extend(to_u32(d, "dimension")?.to_le_bytes());
    out.extend(to_u32(m, "latent count")?.to_le_bytes());
    for v in result.metric.matrix().iter() {
        out.extend(v.to_le_bytes());
    }
    for v in model.latents.iter() {
        out.extend(v.to_le_bytes());
    }
    for &y in &model.latent_labels {
        out.extend(to_u32(y, "label")?.to_le_bytes());
    }
    std::fs::write(path, out)?;

    let meta = ModelMeta {
        format_version: FORMAT_VERSION,
        method: method.to_string(),
        config: cfg.clone(),
        loss_trace: result.loss_trace.clone(),
        label_names: model.label_names.clone(),
        cluster_margins: model.cluster_margins.clone(),
        wall_times: result.wall_times.clone(),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::format(e.to_string()))?;
    std::fs::write(meta_path(path), text + "\n")?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(format!(
                "unexpected end of payload: needed {len} bytes at offset {}, file has {}",
                self.at,
                self.bytes.len()
            ))
        })?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let len = count
            .checked_mul(8)
            .ok_or_else(|| Error::format("unexpected end of payload: size overflow"))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}

/// Reads a model file and, when present, its sidecar.
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let mut cur = Cursor { bytes: &bytes, at: 0 };
    let magic = cur
        .take(MAGIC.len())
        .map_err(|_| Error::format("magic mismatch: file too short to be a model file"))?;
    if magic != MAGIC {
        return Err(Error::format("magic mismatch: not a model file"));
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "model format version {version} is not supported (this build reads version {FORMAT_VERSION})"
        )));
    }
    let d = cur.u32()? as usize;
    let m = cur.u32()? as usize;
    let metric = cur.f64s(d * d)?;
    let latents = cur.f64s(m * d)?;
    let labels: Vec<usize> = (0..m).map(|_| cur.u32().map(|v| v as usize)).collect::<Result<_>>()?;
    if cur.at != bytes.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after the payload",
            bytes.len() - cur.at
        )));
    }
    let shape_err = |e: ndarray::ShapeError| Error::format(e.to_string());
    let metric = Metric::from_matrix(Array2::from_shape_vec((d, d), metric).map_err(shape_err)?)?;
    let latents = Array2::from_shape_vec((m, d), latents).map_err(shape_err)?;

    let meta_file = meta_path(path);
    let meta = if meta_file.exists() {
        let text = std::fs::read_to_string(&meta_file)?;
        let meta: ModelMeta = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("{}: {e}", meta_file.display())))?;
        Some(meta)
    } else {
        None
    };
    Ok(ModelFile {
        metric,
        latents,
        latent_labels: labels,
        meta,
    })
}
