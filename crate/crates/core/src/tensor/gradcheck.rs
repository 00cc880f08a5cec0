//! Central finite differences over every parameter.

use super::mlp::{GradSet, ParamSet};
use crate::error::{Error, Result};

pub fn finite_diff_grad<F>(mut loss_fn: F, params: &ParamSet, eps: f64) -> Result<GradSet>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::Input(format!("finite-difference step {eps} must be positive")));
    }
    let mut grad = params.clone();
    let mut probe = params.clone();
    for j in 0..params.len() {
        let orig = *probe.flat_mut(j);
        *probe.flat_mut(j) = orig + eps;
        let up = loss_fn(&probe)?;
        *probe.flat_mut(j) = orig - eps;
        let down = loss_fn(&probe)?;
        *probe.flat_mut(j) = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!("loss is not finite around parameter {j}")));
        }
        *grad.flat_mut(j) = (up - down) / (2.0 * eps);
    }
    Ok(grad)
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &GradSet, b: &GradSet) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn cosine_similarity(a: &GradSet, b: &GradSet) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        0.0
    } else {
        a.dot(b) / denom
    }
}
