//! One experiment: data, noise, feature pre-training, the cross-entropy
//! baseline and the iterative noise-tolerant run, for each replicate seed.
//!
//! Layout of `output_dir`:
//!
//! ```text
//! summary.json
//! seed_<s>/metrics.csv
//! seed_<s>/noise_report.csv
//! seed_<s>/pretrain.ckpt
//! seed_<s>/baseline_best.ckpt, baseline_final.ckpt
//! seed_<s>/iter<i>_best.ckpt, iter<i>_student.ckpt, iter<i>_teacher.ckpt
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig};
use crate::data::{
    append_metrics, load_dataset, make_synthetic_benchmark, save_checkpoint, save_label_report, Checkpoint, Dataset,
    DatasetFormat, MetricsRow, Role, SplitTag, VAL_FRACTION,
};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::noise::build_feature_index;
use crate::rng::{RngStreams, Stream};
use crate::tensor::{MlpSpec, ParamSet};
use crate::train::{pretrain_features, run_iterative_training, train_baseline, IterationResult};

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Clean train/val/test sets for the configured source. Without a validation
/// file, a share of the training file is held out using the split stream.
pub fn load_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    match &cfg.source {
        DataSource::Benchmark(spec) => {
            let (train, val, test) = make_synthetic_benchmark(spec)?;
            Ok(Splits { train, val, test })
        }
        DataSource::Files(f) => {
            let csv = DatasetFormat::Csv;
            let train = load_dataset(&f.train, csv, f.classes, SplitTag::Train)?;
            let test = load_dataset(&f.test, csv, f.classes, SplitTag::Test)?;
            let (train, val) = match &f.val {
                Some(v) => (train, load_dataset(v, csv, f.classes, SplitTag::Val)?),
                None => hold_out(train, RngStreams::new(cfg.seed))?,
            };
            if train.dim() != test.dim() || val.dim() != test.dim() {
                return Err(Error::Dimension("train, val and test feature widths differ".into()));
            }
            Ok(Splits { train, val, test })
        }
    }
}

fn hold_out(train: Dataset, streams: RngStreams) -> Result<(Dataset, Dataset)> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut streams.stream(Stream::Split, 0));
    let n_val = (train.len() as f64 * VAL_FRACTION).floor() as usize;
    if n_val == 0 || n_val == train.len() {
        return Err(Error::Config(format!(
            "training file with {} rows is too small to hold out a validation set",
            train.len()
        )));
    }
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((
        train.subset(&train_idx),
        train.subset(&val_idx).with_split(SplitTag::Val),
    ))
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Epoch-to-epoch spread of validation accuracy over the second half of training.
fn last_half_std(rows: &[MetricsRow], pick: impl Fn(&MetricsRow) -> f64) -> f64 {
    let tail = &rows[rows.len() / 2..];
    std_dev(&tail.iter().map(pick).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub best_val: f64,
    pub best_epoch: u32,
    pub test_best: f64,
    pub test_final: f64,
    pub val_std_last_half: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: u32,
    pub filtered_count: usize,
    pub best_val: f64,
    pub best_role: Role,
    pub best_epoch: u32,
    pub test_best: f64,
    /// Test accuracy of the final-epoch student and teacher.
    pub test_student: f64,
    pub test_teacher: f64,
    pub student_val_std_last_half: f64,
    pub teacher_val_std_last_half: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub noisy_fraction: f64,
    pub baseline: BaselineSummary,
    pub iterations: Vec<IterationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSummary {
    pub baseline_test_final: f64,
    pub baseline_test_best: f64,
    pub baseline_val_std_last_half: f64,
    /// Indexed by iteration - 1.
    pub test_teacher: Vec<f64>,
    pub test_student: Vec<f64>,
    pub test_best: Vec<f64>,
    pub best_val: Vec<f64>,
    pub student_val_std_last_half: Vec<f64>,
    pub teacher_val_std_last_half: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub seeds: Vec<SeedSummary>,
    pub mean: MeanSummary,
}

impl ExperimentSummary {
    pub fn from_seeds(seeds: Vec<SeedSummary>) -> Self {
        let iters = seeds.iter().map(|s| s.iterations.len()).min().unwrap_or(0);
        let per_iter = |f: fn(&IterationSummary) -> f64| -> Vec<f64> {
            (0..iters)
                .map(|i| mean(seeds.iter().map(|s| f(&s.iterations[i]))))
                .collect()
        };
        let mean = MeanSummary {
            baseline_test_final: mean(seeds.iter().map(|s| s.baseline.test_final)),
            baseline_test_best: mean(seeds.iter().map(|s| s.baseline.test_best)),
            baseline_val_std_last_half: mean(seeds.iter().map(|s| s.baseline.val_std_last_half)),
            test_teacher: per_iter(|i| i.test_teacher),
            test_student: per_iter(|i| i.test_student),
            test_best: per_iter(|i| i.test_best),
            best_val: per_iter(|i| i.best_val),
            student_val_std_last_half: per_iter(|i| i.student_val_std_last_half),
            teacher_val_std_last_half: per_iter(|i| i.teacher_val_std_last_half),
        };
        Self { seeds, mean }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serialises");
        s.push('\n');
        s
    }
}

pub fn seed_dir(output_dir: &Path, seed: u64) -> PathBuf {
    output_dir.join(format!("seed_{seed}"))
}

fn write_checkpoint(dir: &Path, name: &str, ck: &Checkpoint) -> Result<()> {
    save_checkpoint(ck, &dir.join(name))
}

/// Noisy training set for one seed.
pub fn inject_noise(cfg: &ExperimentConfig, train: &Dataset, streams: RngStreams) -> Result<Dataset> {
    let noisy = cfg.noise.apply(
        train.labels(),
        train.classes(),
        &mut streams.stream(Stream::NoiseInjection, 0),
    )?;
    train.clone().with_noisy_labels(noisy)
}

/// Feature network trained with cross entropy on the noisy set.
pub fn pretrain(cfg: &ExperimentConfig, spec: &MlpSpec, noisy: &Dataset, streams: RngStreams) -> Result<ParamSet> {
    pretrain_features(spec, &cfg.hyper, noisy, cfg.pretrain_epochs, streams)
}

fn summarize_iteration(it: &IterationResult, iteration: u32, test: &Dataset) -> Result<IterationSummary> {
    let teacher = it
        .teacher
        .as_ref()
        .ok_or_else(|| Error::State("noise-tolerant iteration without a teacher".into()))?;
    Ok(IterationSummary {
        iteration,
        filtered_count: it.metrics.first().map_or(0, |r| r.filtered_count),
        best_val: it.best.val_accuracy,
        best_role: it.best.role,
        best_epoch: it.best.epoch,
        test_best: evaluate(&it.best, test)?.accuracy,
        test_student: evaluate(&it.student, test)?.accuracy,
        test_teacher: evaluate(teacher, test)?.accuracy,
        student_val_std_last_half: last_half_std(&it.metrics, |r| r.val_acc_student),
        teacher_val_std_last_half: last_half_std(&it.metrics, |r| r.val_acc_teacher),
    })
}

/// Full protocol for one master seed; artifacts go to `seed_dir(output_dir, seed)`.
pub fn run_seed(cfg: &ExperimentConfig, splits: &Splits, seed: u64) -> Result<SeedSummary> {
    let dir = seed_dir(&cfg.output_dir, seed);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let metrics_path = dir.join("metrics.csv");
    if metrics_path.exists() {
        fs::remove_file(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    }

    let streams = RngStreams::new(seed);
    let spec = cfg.model.mlp_spec(splits.train.dim(), splits.train.classes())?;
    let noisy = inject_noise(cfg, &splits.train, streams)?;
    save_label_report(&noisy, &dir.join("noise_report.csv"))?;
    let noisy_fraction = noisy
        .clean_labels()
        .map(|c| c.iter().zip(noisy.labels()).filter(|(a, b)| a != b).count() as f64 / noisy.len().max(1) as f64)
        .unwrap_or(0.0);

    let pretrained = pretrain(cfg, &spec, &noisy, streams)?;
    write_checkpoint(
        &dir,
        "pretrain.ckpt",
        &Checkpoint {
            spec: spec.clone(),
            params: pretrained.clone(),
            epoch: cfg.pretrain_epochs.saturating_sub(1),
            role: Role::Student,
            val_accuracy: crate::eval::accuracy(&spec, &pretrained, &splits.val)?,
        },
    )?;
    let index = build_feature_index(&noisy, &spec, &pretrained)?;

    let baseline = train_baseline(&spec, &cfg.hyper, &noisy, &splits.val, streams)?;
    for row in &baseline.metrics {
        append_metrics(row, &metrics_path)?;
    }
    write_checkpoint(&dir, "baseline_best.ckpt", &baseline.best)?;
    write_checkpoint(&dir, "baseline_final.ckpt", &baseline.student)?;
    let baseline_summary = BaselineSummary {
        best_val: baseline.best.val_accuracy,
        best_epoch: baseline.best.epoch,
        test_best: evaluate(&baseline.best, &splits.test)?.accuracy,
        test_final: evaluate(&baseline.student, &splits.test)?.accuracy,
        val_std_last_half: last_half_std(&baseline.metrics, |r| r.val_acc_student),
    };

    let outcome = run_iterative_training(&cfg.plan, &cfg.hyper, &spec, &noisy, &splits.val, &index, streams)?;
    let mut iterations = Vec::with_capacity(outcome.iterations.len());
    for (i, it) in outcome.iterations.iter().enumerate() {
        let n = i as u32 + 1;
        for row in &it.metrics {
            append_metrics(row, &metrics_path)?;
        }
        write_checkpoint(&dir, &format!("iter{n}_best.ckpt"), &it.best)?;
        write_checkpoint(&dir, &format!("iter{n}_student.ckpt"), &it.student)?;
        if let Some(t) = &it.teacher {
            write_checkpoint(&dir, &format!("iter{n}_teacher.ckpt"), t)?;
        }
        iterations.push(summarize_iteration(it, n, &splits.test)?);
    }

    Ok(SeedSummary {
        seed,
        noisy_fraction,
        baseline: baseline_summary,
        iterations,
    })
}

/// All replicate seeds (in parallel), then `summary.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let splits = load_splits(cfg)?;
    let seeds = cfg.replicate_seeds();
    let mut results: Vec<SeedSummary> = seeds
        .par_iter()
        .map(|&s| run_seed(cfg, &splits, s))
        .collect::<Result<_>>()?;
    results.sort_by_key(|s| s.seed);
    let summary = ExperimentSummary::from_seeds(results);
    let path = cfg.output_dir.join("summary.json");
    fs::write(&path, summary.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std() {
        assert_eq!(std_dev(&[1.0, 1.0, 1.0]), 0.0);
        assert!((std_dev(&[0.0, 2.0]) - 1.0).abs() < 1e-15);
        assert!(std_dev(&[]).is_nan());
    }
}
