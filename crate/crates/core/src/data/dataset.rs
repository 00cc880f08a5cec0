//! In-memory labelled datasets and their CSV form (`id,label,f0,...,f{d-1}`).

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    #[default]
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    classes: usize,
    ids: Vec<u64>,
    split: SplitTag,
    /// Ground truth kept beside corrupted labels, for evaluation only.
    clean_labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize, ids: Vec<u64>, split: SplitTag) -> Result<Self> {
        if features.rows() != labels.len() || labels.len() != ids.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows, {} labels, {} ids",
                features.rows(),
                labels.len(),
                ids.len()
            )));
        }
        if classes < 2 {
            return Err(Error::Range(format!("class count {classes} must be at least 2")));
        }
        if let Some((i, y)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
            return Err(Error::Range(format!(
                "label {y} of sample {} outside 0..{classes}",
                ids[i]
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        if !features.all_finite() {
            return Err(Error::Numeric("dataset features contain NaN or infinity".into()));
        }
        Ok(Self {
            features,
            labels,
            classes,
            ids,
            split,
            clean_labels: None,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn clean_labels(&self) -> Option<&[usize]> {
        self.clean_labels.as_deref()
    }

    pub fn with_split(mut self, split: SplitTag) -> Self {
        self.split = split;
        self
    }

    /// Replace the training labels, remembering the current ones as ground truth.
    pub fn with_noisy_labels(mut self, noisy: Vec<usize>) -> Result<Self> {
        if noisy.len() != self.labels.len() {
            return Err(Error::Dimension(format!(
                "{} noisy labels for {} samples",
                noisy.len(),
                self.labels.len()
            )));
        }
        if let Some(y) = noisy.iter().find(|&&y| y >= self.classes) {
            return Err(Error::Range(format!("label {y} outside 0..{}", self.classes)));
        }
        let clean = std::mem::replace(&mut self.labels, noisy);
        self.clean_labels.get_or_insert(clean);
        Ok(self)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
            split: self.split,
            clean_labels: self
                .clean_labels
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
        }
    }

    pub fn label_matrix(&self) -> Matrix {
        Matrix::one_hot(&self.labels, self.classes).expect("labels validated on construction")
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat, classes: usize, split: SplitTag) -> Result<Dataset> {
    match format {
        DatasetFormat::Csv => load_csv(path, classes, split),
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: format!("{}:{}", path.display(), line),
        message: message.into(),
    }
}

fn load_csv(path: &Path, classes: usize, split: SplitTag) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "id" || cols[1] != "label" {
        return Err(parse_err(path, 1, "header must be `id,label,f0,...`"));
    }
    let dim = cols.len() - 2;

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 2 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} fields, found {}", dim + 2, fields.len()),
            ));
        }
        ids.push(
            fields[0]
                .parse::<u64>()
                .map_err(|e| parse_err(path, lineno, format!("id: {e}")))?,
        );
        labels.push(
            fields[1]
                .parse::<usize>()
                .map_err(|e| parse_err(path, lineno, format!("label: {e}")))?,
        );
        for f in &fields[2..] {
            values.push(
                f.parse::<f64>()
                    .map_err(|e| parse_err(path, lineno, format!("feature: {e}")))?,
            );
        }
    }
    let features = Matrix::from_vec(labels.len(), dim, values)?;
    Dataset::new(features, labels, classes, ids, split)
}

/// Write `dataset` as CSV; floats use the shortest exact decimal form.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::from("id,label");
    for j in 0..dataset.dim() {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for (i, row) in dataset.features.iter_rows().enumerate() {
        let _ = write!(out, "{},{}", dataset.ids[i], dataset.labels[i]);
        for v in row {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// `sample_id,original_label,noisy_label` for every sample of a corrupted set.
pub fn save_label_report(dataset: &Dataset, path: &Path) -> Result<()> {
    let clean = dataset
        .clean_labels()
        .ok_or_else(|| Error::Input("dataset has no recorded original labels".into()))?;
    let mut out = String::from("sample_id,original_label,noisy_label\n");
    for ((id, c), n) in dataset.ids.iter().zip(clean).zip(&dataset.labels) {
        let _ = writeln!(out, "{id},{c},{n}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
