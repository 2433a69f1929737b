//! Mean reconstruction error of each method over a dataset directory.
//!
//! A dataset holds `<item>.2d.csv` landmark files, each paired with an
//! `<item>.3d.csv` ground-truth shape.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use shapefit::model::reconstruction_error;
use shapefit::{LandmarkSet2D, Shape3D, ShapeDictionary};

use crate::error::{HarnessError, Result};
use crate::formats::{read_landmarks, read_shape, write_text};
use crate::methods::{reconstruct, Method, MethodOptions};

pub const LANDMARK_SUFFIX: &str = ".2d.csv";
pub const TRUTH_SUFFIX: &str = ".3d.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetItem {
    pub name: String,
    pub w: LandmarkSet2D,
    pub truth: Option<Shape3D>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ItemStatus {
    Ok,
    MissingTruth,
    Failed,
}

impl ItemStatus {
    pub fn name(self) -> &'static str {
        match self {
            ItemStatus::Ok => "ok",
            ItemStatus::MissingTruth => "missing_truth",
            ItemStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItemErrors {
    pub name: String,
    pub status: ItemStatus,
    /// One entry per evaluated method, in the table's method order.
    pub errors: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationTable {
    pub methods: Vec<Method>,
    pub items: Vec<ItemErrors>,
}

impl EvaluationTable {
    /// Mean over items with status `ok`; `None` when there are none.
    pub fn mean(&self, method: Method) -> Option<f64> {
        let col = self.methods.iter().position(|&m| m == method)?;
        let vals: Vec<f64> = self
            .items
            .iter()
            .filter(|i| i.status == ItemStatus::Ok)
            .filter_map(|i| i.errors[col])
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("item,status");
        for m in &self.methods {
            let _ = write!(out, ",{m}");
        }
        out.push('\n');
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for item in &self.items {
            let _ = write!(out, "{},{}", item.name, item.status.name());
            for &e in &item.errors {
                let _ = write!(out, ",{}", cell(e));
            }
            out.push('\n');
        }
        out.push_str("mean,ok");
        for &m in &self.methods {
            let _ = write!(out, ",{}", cell(self.mean(m)));
        }
        out.push('\n');
        out
    }
}

/// Items sorted by name. Landmark files without a partner get `truth: None`.
pub fn load_dataset(dir: &Path) -> Result<Vec<DatasetItem>> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| HarnessError::io(dir, e))?;
        let file = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = file.strip_suffix(LANDMARK_SUFFIX) {
            names.push(stem.to_string());
        }
    }
    if names.is_empty() {
        return Err(HarnessError::Invalid(format!("{}: no items", dir.display())));
    }
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let w = read_landmarks(&dir.join(format!("{name}{LANDMARK_SUFFIX}")))?;
            let truth_path: PathBuf = dir.join(format!("{name}{TRUTH_SUFFIX}"));
            let truth = if truth_path.exists() {
                Some(read_shape(&truth_path)?)
            } else {
                None
            };
            Ok(DatasetItem { name, w, truth })
        })
        .collect()
}

/// Scores every method on every item. Items run in parallel; failures of a
/// single item are recorded rather than propagated.
pub fn evaluate_items(
    items: &[DatasetItem],
    dict: &ShapeDictionary,
    methods: &[Method],
    opts: &MethodOptions,
) -> Result<EvaluationTable> {
    if items.is_empty() {
        return Err(HarnessError::Invalid("no items".into()));
    }
    if methods.is_empty() {
        return Err(HarnessError::Invalid("no methods selected".into()));
    }
    let rows = items
        .par_iter()
        .map(|item| evaluate_one(item, dict, methods, opts))
        .collect();
    Ok(EvaluationTable {
        methods: methods.to_vec(),
        items: rows,
    })
}

fn evaluate_one(item: &DatasetItem, dict: &ShapeDictionary, methods: &[Method], opts: &MethodOptions) -> ItemErrors {
    let mut row = ItemErrors {
        name: item.name.clone(),
        status: ItemStatus::Ok,
        errors: vec![None; methods.len()],
    };
    let Some(truth) = &item.truth else {
        eprintln!("warning: {}: no ground truth, skipped", item.name);
        row.status = ItemStatus::MissingTruth;
        return row;
    };
    for (slot, &m) in row.errors.iter_mut().zip(methods) {
        let scored = reconstruct(m, &item.w, dict, opts).and_then(|res| {
            let shape = res.shape().ok_or(shapefit::Error::NonFinite("reconstruction"))?;
            reconstruction_error(&shape, truth)
        });
        match scored {
            Ok(e) => *slot = Some(e),
            Err(e) => {
                eprintln!("warning: {}: {m} failed: {e}", item.name);
                row.status = ItemStatus::Failed;
            }
        }
    }
    if row.status == ItemStatus::Failed {
        row.errors.iter_mut().for_each(|e| *e = None);
    }
    row
}

/// Loads the dataset and dictionary, scores `methods` and writes the CSV.
pub fn run_evaluate(
    dataset_dir: &Path,
    dict_path: &Path,
    methods: &[Method],
    opts: &MethodOptions,
    out_path: &Path,
) -> Result<EvaluationTable> {
    let dict = crate::formats::read_dictionary(dict_path)?;
    let items = load_dataset(dataset_dir)?;
    if let Some(bad) = items.iter().find(|i| i.w.len() != dict.num_landmarks()) {
        return Err(HarnessError::parse(
            dataset_dir.join(format!("{}{LANDMARK_SUFFIX}", bad.name)),
            shapefit::Error::LandmarkCountMismatch {
                expected: dict.num_landmarks(),
                found: bad.w.len(),
            },
        ));
    }
    let table = evaluate_items(&items, &dict, methods, opts)?;
    write_text(out_path, &table.to_csv())?;
    Ok(table)
}
