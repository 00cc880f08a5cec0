//! Grid sweeps over one hyper-parameter: a full experiment per value plus an
//! aggregate CSV with one row per (value, seed, iteration).

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;

use super::config::{ExperimentConfig, SweepConfig};
use super::experiment::{run_experiment, ExperimentSummary};
use crate::error::{Error, Result};

pub const SWEEP_HEADER: [&str; 10] = [
    "axis",
    "value",
    "seed",
    "iteration",
    "filtered_count",
    "best_val",
    "test_best",
    "test_student",
    "test_teacher",
    "baseline_test_final",
];

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub output_dir: PathBuf,
    pub summary: ExperimentSummary,
}

pub fn point_dir_name(sweep: &SweepConfig, value: f64) -> String {
    format!("{}_{value:?}", sweep.axis.name())
}

/// Config for one sweep value. The value replaces the base setting; explicit
/// per-iteration overrides of the same parameter still take precedence.
pub fn point_config(base: &ExperimentConfig, sweep: &SweepConfig, value: f64) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.hyper = sweep.axis.apply(&base.hyper, value);
    cfg.output_dir = base.output_dir.join(point_dir_name(sweep, value));
    cfg.sweep = None;
    cfg
}

pub fn aggregate_rows(sweep: &SweepConfig, points: &[SweepPoint]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for p in points {
        for s in &p.summary.seeds {
            for it in &s.iterations {
                rows.push(vec![
                    sweep.axis.name().to_string(),
                    format!("{:?}", p.value),
                    s.seed.to_string(),
                    it.iteration.to_string(),
                    it.filtered_count.to_string(),
                    format!("{:?}", it.best_val),
                    format!("{:?}", it.test_best),
                    format!("{:?}", it.test_student),
                    format!("{:?}", it.test_teacher),
                    format!("{:?}", s.baseline.test_final),
                ]);
            }
        }
    }
    rows
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("no [sweep] table in the configuration".into()))?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let points: Vec<SweepPoint> = sweep
        .values
        .par_iter()
        .map(|&value| {
            let point = point_config(cfg, sweep, value);
            let summary = run_experiment(&point)?;
            Ok(SweepPoint {
                value,
                output_dir: point.output_dir,
                summary,
            })
        })
        .collect::<Result<_>>()?;

    let mut text = SWEEP_HEADER.join(",");
    text.push('\n');
    for row in aggregate_rows(sweep, &points) {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let path = cfg.output_dir.join("sweep.csv");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(points)
}
