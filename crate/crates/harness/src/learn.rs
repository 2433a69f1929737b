//! Dictionary training from a directory of shape files.

use std::path::{Path, PathBuf};

use shapefit::dictionary::{align_training_set, learn_dictionary, DictLearnOptions, LearnedDictionary};

use crate::error::{HarnessError, Result};
use crate::formats::{read_shape, write_dictionary};

pub const DEFAULT_K: usize = 64;
pub const DEFAULT_BETA: f64 = 0.01;

/// Every `*.csv` file in `dir`, sorted by name.
pub fn shape_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))? {
        let path = entry.map_err(|e| HarnessError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "csv") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Clone, Debug)]
pub struct LearnReport {
    pub learned: LearnedDictionary,
    pub num_shapes: usize,
    /// Largest per-shape relative residual on the aligned training set.
    pub max_residual: f64,
}

/// Aligns the shapes found in `shapes_dir`, learns `k` atoms and writes the
/// dictionary JSON.
pub fn run_learn_dict(
    shapes_dir: &Path,
    k: usize,
    beta: f64,
    opts: &DictLearnOptions,
    out_path: &Path,
) -> Result<LearnReport> {
    let files = shape_files(shapes_dir)?;
    if files.len() < k {
        return Err(HarnessError::Invalid(format!(
            "too few shapes: {} found in {}, k = {k}",
            files.len(),
            shapes_dir.display()
        )));
    }
    let shapes = files.iter().map(|f| read_shape(f)).collect::<Result<Vec<_>>>()?;
    if let Some((f, s)) = files.iter().zip(&shapes).find(|(_, s)| s.len() != shapes[0].len()) {
        return Err(HarnessError::parse(
            f,
            shapefit::Error::LandmarkCountMismatch {
                expected: shapes[0].len(),
                found: s.len(),
            },
        ));
    }
    let aligned = align_training_set(&shapes)?;
    let learned = learn_dictionary(&aligned, k, beta, opts)?;
    write_dictionary(out_path, &learned.dictionary)?;
    let max_residual = learned.relative_residuals(&aligned).into_iter().fold(0.0, f64::max);
    Ok(LearnReport {
        learned,
        num_shapes: shapes.len(),
        max_residual,
    })
}
