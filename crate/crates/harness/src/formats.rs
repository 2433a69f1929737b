//! On-disk formats.
//!
//! * landmarks: CSV `x,y,visible`, one row per landmark, header optional
//! * shapes: CSV `x,y,z`, one row per landmark, header optional
//! * dictionaries and solve results: JSON with a `format_version` field

use std::fs;
use std::path::Path;

use nalgebra::{Matrix2xX, Matrix3, Matrix3xX};
use serde::{Deserialize, Serialize};
use shapefit::{LandmarkSet2D, Shape3D, ShapeDictionary};

use crate::error::{HarnessError, Result};

pub const FORMAT_VERSION: u32 = 1;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Parses rows of exactly `names.len()` numeric fields. A first row whose
/// fields equal `names` (case-insensitive) is skipped.
fn parse_rows(text: &str, names: &[&str], path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| HarnessError::parse(path, e))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if i == 0 && record.iter().map(str::to_ascii_lowercase).eq(names.iter().map(|s| s.to_string())) {
            continue;
        }
        if record.len() != names.len() {
            return Err(HarnessError::parse(
                path,
                format!("line {}: expected {} fields, found {}", i + 1, names.len(), record.len()),
            ));
        }
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| HarnessError::parse(path, format!("line {}: bad number {f:?}", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn parse_landmarks_csv(text: &str, path: &Path) -> Result<LandmarkSet2D> {
    let rows = parse_rows(text, &["x", "y", "visible"], path)?;
    let mut visibility = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        visibility.push(match r[2] {
            v if v == 0.0 => false,
            v if v == 1.0 => true,
            v => return Err(HarnessError::parse(path, format!("row {}: visible must be 0 or 1, got {v}", i + 1))),
        });
    }
    let points = Matrix2xX::from_fn(rows.len(), |d, j| rows[j][d]);
    LandmarkSet2D::new(points, visibility).map_err(|e| HarnessError::parse(path, e))
}

pub fn read_landmarks(path: &Path) -> Result<LandmarkSet2D> {
    parse_landmarks_csv(&read_text(path)?, path)
}

pub fn landmarks_to_csv(w: &LandmarkSet2D) -> String {
    let mut out = String::from("x,y,visible\n");
    for (col, &vis) in w.points().column_iter().zip(w.visibility()) {
        out.push_str(&format!("{},{},{}\n", col[0], col[1], u8::from(vis)));
    }
    out
}

pub fn write_landmarks(path: &Path, w: &LandmarkSet2D) -> Result<()> {
    write_text(path, &landmarks_to_csv(w))
}

pub fn parse_shape_csv(text: &str, path: &Path) -> Result<Shape3D> {
    let rows = parse_rows(text, &["x", "y", "z"], path)?;
    let points = Matrix3xX::from_fn(rows.len(), |d, j| rows[j][d]);
    Shape3D::new(points).map_err(|e| HarnessError::parse(path, e))
}

pub fn read_shape(path: &Path) -> Result<Shape3D> {
    parse_shape_csv(&read_text(path)?, path)
}

pub fn shape_to_csv(s: &Shape3D) -> String {
    let mut out = String::from("x,y,z\n");
    for col in s.points().column_iter() {
        out.push_str(&format!("{},{},{}\n", col[0], col[1], col[2]));
    }
    out
}

pub fn write_shape(path: &Path, s: &Shape3D) -> Result<()> {
    write_text(path, &shape_to_csv(s))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryFile {
    pub format_version: u32,
    pub k: usize,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// One `3 × p` matrix per basis, row-major.
    pub bases: Vec<Vec<Vec<f64>>>,
}

impl DictionaryFile {
    pub fn from_dictionary(dict: &ShapeDictionary) -> Self {
        DictionaryFile {
            format_version: FORMAT_VERSION,
            k: dict.len(),
            p: dict.num_landmarks(),
            labels: dict.labels().map(<[String]>::to_vec),
            bases: dict.bases().iter().map(|b| matrix_rows(b.points())).collect(),
        }
    }

    pub fn into_dictionary(self, path: &Path) -> Result<ShapeDictionary> {
        let bad = |msg: String| HarnessError::parse(path, msg);
        if self.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format_version {}", self.format_version)));
        }
        if self.bases.len() != self.k {
            return Err(bad(format!("k = {} but {} bases given", self.k, self.bases.len())));
        }
        let mut bases = Vec::with_capacity(self.k);
        for (i, rows) in self.bases.iter().enumerate() {
            if rows.len() != 3 || rows.iter().any(|r| r.len() != self.p) {
                return Err(bad(format!("basis {i} is not a 3 x {} matrix", self.p)));
            }
            let pts = Matrix3xX::from_fn(self.p, |d, j| rows[d][j]);
            bases.push(Shape3D::new(pts).map_err(|e| bad(format!("basis {i}: {e}")))?);
        }
        let dict = ShapeDictionary::new(bases).map_err(|e| bad(e.to_string()))?;
        match self.labels {
            Some(labels) => dict.with_labels(labels).map_err(|e| bad(e.to_string())),
            None => Ok(dict),
        }
    }
}

fn matrix_rows(m: &Matrix3xX<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn read_dictionary(path: &Path) -> Result<ShapeDictionary> {
    let file: DictionaryFile =
        serde_json::from_str(&read_text(path)?).map_err(|e| HarnessError::parse(path, e))?;
    file.into_dictionary(path)
}

pub fn dictionary_to_json(dict: &ShapeDictionary) -> String {
    let mut s = serde_json::to_string_pretty(&DictionaryFile::from_dictionary(dict)).expect("serializable");
    s.push('\n');
    s
}

pub fn write_dictionary(path: &Path, dict: &ShapeDictionary) -> Result<()> {
    write_text(path, &dictionary_to_json(dict))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub objective: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primal_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_residual: Option<f64>,
    /// `σ₁/σ₂ − 1` per basis, null where inactive. Convex method only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tightness: Option<Vec<Option<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub format_version: u32,
    pub method: String,
    pub init_source: Option<String>,
    pub k: usize,
    pub p: usize,
    pub lambda: f64,
    pub coefficients: Vec<f64>,
    /// One 3×3 rotation per basis, row-major.
    pub rotations: Vec<[[f64; 3]; 3]>,
    /// Reconstructed `3 × p` shape, row-major.
    pub points: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl ResultFile {
    pub fn shape(&self) -> Option<Shape3D> {
        if self.points.len() != 3 || self.points.iter().any(|r| r.len() != self.p) {
            return None;
        }
        Shape3D::new(Matrix3xX::from_fn(self.p, |d, j| self.points[d][j])).ok()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }
}

pub(crate) fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub(crate) fn rotation_rows(r: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| r[(i, j)]))
}

pub(crate) fn shape_rows(s: &Shape3D) -> Vec<Vec<f64>> {
    matrix_rows(s.points())
}

pub fn read_result(path: &Path) -> Result<ResultFile> {
    serde_json::from_str(&read_text(path)?).map_err(|e| HarnessError::parse(path, e))
}
