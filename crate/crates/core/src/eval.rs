//! Top-1 accuracy and confusion counts.

use serde::{Deserialize, Serialize};

use crate::data::{Checkpoint, Dataset};
use crate::error::{Error, Result};
use crate::tensor::{forward, MlpSpec, ParamSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<u64>>,
    pub n: usize,
}

pub fn evaluate_params(spec: &MlpSpec, params: &ParamSet, dataset: &Dataset) -> Result<Evaluation> {
    if spec.num_classes() != dataset.classes() {
        return Err(Error::Dimension(format!(
            "network predicts {} classes, dataset has {}",
            spec.num_classes(),
            dataset.classes()
        )));
    }
    let c = dataset.classes();
    let mut confusion = vec![vec![0u64; c]; c];
    if dataset.is_empty() {
        return Ok(Evaluation {
            accuracy: 0.0,
            confusion,
            n: 0,
        });
    }
    let (_, out) = forward(spec, params, dataset.features())?;
    let mut correct = 0usize;
    for (&y, p) in dataset.labels().iter().zip(out.predictions()) {
        confusion[y][p] += 1;
        correct += usize::from(y == p);
    }
    Ok(Evaluation {
        accuracy: correct as f64 / dataset.len() as f64,
        confusion,
        n: dataset.len(),
    })
}

pub fn evaluate(checkpoint: &Checkpoint, dataset: &Dataset) -> Result<Evaluation> {
    evaluate_params(&checkpoint.spec, &checkpoint.params, dataset)
}

pub fn accuracy(spec: &MlpSpec, params: &ParamSet, dataset: &Dataset) -> Result<f64> {
    Ok(evaluate_params(spec, params, dataset)?.accuracy)
}
