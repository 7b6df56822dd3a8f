//! Datasets and model files.

pub mod corpus;
pub mod folds;
pub mod model_file;
pub mod ocr;
pub mod pos;
pub mod toy;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{DhmmError, Result};

pub use corpus::Corpus;
pub use folds::{k_fold_split, FoldSplit};
pub use model_file::{load_model, save_model};
pub use ocr::read_ocr_dataset;
pub use pos::{read_pos_corpus, TagMergeMap};
pub use toy::{generate_toy_dataset, variance_sweep_configs, ToyConfig};

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| DhmmError::invalid(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).map_err(|e| DhmmError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| DhmmError::io(&tmp, e))?;
    f.sync_all().map_err(|e| DhmmError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| DhmmError::io(path, e))
}
