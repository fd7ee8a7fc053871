//! Dataset readers, the synthetic generator and model persistence.

mod csv_file;
mod idx;
mod model_file;
mod synthetic;

pub use csv_file::{load_csv, save_csv, save_latents_csv, LabelColumn};
pub use idx::{load_idx, load_mnist, MnistSplit};
pub use model_file::{load_model, meta_path, save_model, ModelFile, ModelMeta, FORMAT_VERSION, MAGIC};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::Result;

/// Reads a whole file, transparently inflating gzip content.
pub(crate) fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}
