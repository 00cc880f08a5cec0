//! Append-only per-epoch metrics CSV.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 12] = [
    "iteration",
    "epoch",
    "step_lr",
    "eta",
    "gamma",
    "lambda",
    "train_acc_noisy",
    "val_acc_student",
    "val_acc_teacher",
    "ce_loss",
    "meta_loss",
    "filtered_count",
];

/// One evaluation record. Iteration 0 denotes the cross-entropy baseline,
/// which has no teacher (its `val_acc_teacher` is NaN).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u32,
    pub epoch: u32,
    pub step_lr: f64,
    pub eta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub train_acc_noisy: f64,
    pub val_acc_student: f64,
    pub val_acc_teacher: f64,
    pub ce_loss: f64,
    pub meta_loss: f64,
    pub filtered_count: usize,
}

impl MetricsRow {
    pub fn fields(&self) -> Vec<String> {
        vec![
            self.iteration.to_string(),
            self.epoch.to_string(),
            format!("{:?}", self.step_lr),
            format!("{:?}", self.eta),
            format!("{:?}", self.gamma),
            format!("{:?}", self.lambda),
            format!("{:?}", self.train_acc_noisy),
            format!("{:?}", self.val_acc_student),
            format!("{:?}", self.val_acc_teacher),
            format!("{:?}", self.ce_loss),
            format!("{:?}", self.meta_loss),
            self.filtered_count.to_string(),
        ]
    }

    fn parse(fields: &[&str]) -> std::result::Result<Self, String> {
        if fields.len() != METRICS_HEADER.len() {
            return Err(format!(
                "expected {} fields, found {}",
                METRICS_HEADER.len(),
                fields.len()
            ));
        }
        let f = |i: usize| {
            fields[i]
                .parse::<f64>()
                .map_err(|e| format!("{}: {e}", METRICS_HEADER[i]))
        };
        let u = |i: usize| {
            fields[i]
                .parse::<u64>()
                .map_err(|e| format!("{}: {e}", METRICS_HEADER[i]))
        };
        Ok(Self {
            iteration: u(0)? as u32,
            epoch: u(1)? as u32,
            step_lr: f(2)?,
            eta: f(3)?,
            gamma: f(4)?,
            lambda: f(5)?,
            train_acc_noisy: f(6)?,
            val_acc_student: f(7)?,
            val_acc_teacher: f(8)?,
            ce_loss: f(9)?,
            meta_loss: f(10)?,
            filtered_count: u(11)? as usize,
        })
    }
}

/// Append one record under `header`, writing the header first if the file is
/// new or empty. The record goes out in a single `write_all`.
pub fn append_csv_record(path: &Path, header: &[&str], fields: &[String]) -> Result<()> {
    if fields.len() != header.len() {
        return Err(Error::HeaderMismatch {
            path: path.to_path_buf(),
            expected: header.join(","),
            found: format!("a record with {} fields", fields.len()),
        });
    }
    let existing = match fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(Error::io(path, e)),
    };
    let expected = header.join(",");
    let mut chunk = String::new();
    match existing.lines().next() {
        None => {
            chunk.push_str(&expected);
            chunk.push('\n');
        }
        Some(first) if first.trim_end() == expected => {}
        Some(first) => {
            return Err(Error::HeaderMismatch {
                path: path.to_path_buf(),
                expected,
                found: first.to_string(),
            })
        }
    }
    chunk.push_str(&fields.join(","));
    chunk.push('\n');
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    file.write_all(chunk.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn append_metrics(row: &MetricsRow, path: &Path) -> Result<()> {
    append_csv_record(path, &METRICS_HEADER, &row.fields())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let expected = METRICS_HEADER.join(",");
    match lines.next() {
        Some(h) if h == expected => {}
        other => {
            return Err(Error::HeaderMismatch {
                path: path.to_path_buf(),
                expected,
                found: other.unwrap_or("").to_string(),
            })
        }
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            MetricsRow::parse(&fields).map_err(|message| Error::Parse {
                path: format!("{}:{}", path.display(), i + 2),
                message,
            })
        })
        .collect()
}
