//! Label corruption: symmetric replacement and class-conditional flips.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseKind {
    Symmetric,
    /// Source class -> target class; classes not in the map are never flipped.
    Asymmetric(BTreeMap<usize, usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub ratio: f64,
}

impl NoiseSpec {
    pub fn clean() -> Self {
        Self {
            kind: NoiseKind::Symmetric,
            ratio: 0.0,
        }
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        check_ratio(self.ratio)?;
        if let NoiseKind::Asymmetric(map) = &self.kind {
            check_class_map(map, classes)?;
        }
        Ok(())
    }

    pub fn apply<R: Rng + ?Sized>(&self, labels: &[usize], classes: usize, rng: &mut R) -> Result<Vec<usize>> {
        match &self.kind {
            NoiseKind::Symmetric => inject_symmetric(labels, classes, self.ratio, rng),
            NoiseKind::Asymmetric(map) => {
                check_class_map(map, classes)?;
                check_labels(labels, classes)?;
                inject_asymmetric(labels, map, self.ratio, rng)
            }
        }
    }
}

/// CIFAR-10 class ids: 0 airplane, 1 automobile, 2 bird, 3 cat, 4 deer,
/// 5 dog, 6 frog, 7 horse, 8 ship, 9 truck.
pub fn cifar10_class_map() -> BTreeMap<usize, usize> {
    BTreeMap::from([(9, 1), (2, 0), (4, 7), (3, 5), (5, 3)])
}

fn check_ratio(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Input(format!("noise ratio {r} outside [0, 1]")));
    }
    Ok(())
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    if let Some((i, y)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
        return Err(Error::Input(format!("label {y} at position {i} outside 0..{classes}")));
    }
    Ok(())
}

fn check_class_map(map: &BTreeMap<usize, usize>, classes: usize) -> Result<()> {
    if let Some((s, t)) = map.iter().find(|(&s, &t)| s >= classes || t >= classes) {
        return Err(Error::Input(format!("class map entry {s} -> {t} outside 0..{classes}")));
    }
    Ok(())
}

/// With probability `r` each label is redrawn uniformly over all `classes`
/// (the redraw may land on the original class).
pub fn inject_symmetric<R: Rng + ?Sized>(labels: &[usize], classes: usize, r: f64, rng: &mut R) -> Result<Vec<usize>> {
    check_ratio(r)?;
    check_labels(labels, classes)?;
    Ok(labels
        .iter()
        .map(|&y| {
            if rng.random::<f64>() < r {
                rng.random_range(0..classes)
            } else {
                y
            }
        })
        .collect())
}

/// Mapped classes flip to their target with probability `r`.
pub fn inject_asymmetric<R: Rng + ?Sized>(
    labels: &[usize],
    class_map: &BTreeMap<usize, usize>,
    r: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    check_ratio(r)?;
    Ok(labels
        .iter()
        .map(|&y| match class_map.get(&y) {
            Some(&target) if rng.random::<f64>() < r => target,
            _ => y,
        })
        .collect())
}
