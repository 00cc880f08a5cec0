//! Mean-reduced cross entropy and KL divergence with their logit gradients.
//!
//! Logarithms are clamped at [`LOG_FLOOR`]; the gradients below are exact for
//! the clamped losses, so a clamped term contributes nothing.

use super::matrix::Matrix;
use super::mlp::{backward_from_logits, raw_softmax, ActivationCache, GradSet, ParamSet, SoftmaxOutput};
use crate::error::{Error, Result};

pub const LOG_FLOOR: f64 = 1e-12;

#[inline]
fn clamped_ln(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

/// Class index of each row of a one-hot matrix.
pub fn one_hot_classes(y: &Matrix) -> Result<Vec<usize>> {
    y.iter_rows()
        .enumerate()
        .map(|(i, row)| {
            let mut hot = None;
            for (j, &v) in row.iter().enumerate() {
                if v == 1.0 && hot.is_none() {
                    hot = Some(j);
                } else if v != 0.0 {
                    return Err(Error::Input(format!("label row {i} is not one-hot")));
                }
            }
            hot.ok_or_else(|| Error::Input(format!("label row {i} is not one-hot")))
        })
        .collect()
}

fn check_same_shape(a: &Matrix, b: &Matrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn cross_entropy(out: &SoftmaxOutput, y: &Matrix) -> Result<f64> {
    check_same_shape(out.probs(), y, "cross entropy operands")?;
    let classes = one_hot_classes(y)?;
    let k = classes.len().max(1) as f64;
    let total: f64 = classes
        .iter()
        .enumerate()
        .map(|(i, &c)| -clamped_ln(out.probs().get(i, c)))
        .sum();
    Ok(total / k)
}

/// `(1/k) sum_i KL(target_i || subject_i)`.
pub fn kl_divergence(target: &SoftmaxOutput, subject: &SoftmaxOutput) -> Result<f64> {
    check_same_shape(target.probs(), subject.probs(), "KL operands")?;
    let k = target.rows().max(1) as f64;
    let mut total = 0.0;
    for (p_row, q_row) in target.probs().iter_rows().zip(subject.probs().iter_rows()) {
        for (&p, &q) in p_row.iter().zip(q_row) {
            if p > 0.0 {
                total += p * (clamped_ln(p) - clamped_ln(q));
            }
        }
    }
    Ok((total / k).max(0.0))
}

/// Gradient of [`cross_entropy`] against one-hot `y` for every parameter.
pub fn backward_ce(params: &ParamSet, cache: &ActivationCache, y: &Matrix) -> Result<GradSet> {
    let mut d = raw_softmax(cache.logits());
    check_same_shape(&d, y, "cross entropy gradient operands")?;
    let classes = one_hot_classes(y)?;
    let k = classes.len().max(1) as f64;
    for (i, &c) in classes.iter().enumerate() {
        let row = d.row_mut(i);
        if row[c] < LOG_FLOOR {
            row.fill(0.0);
            continue;
        }
        row[c] -= 1.0;
        for v in row.iter_mut() {
            *v /= k;
        }
    }
    backward_from_logits(params, cache, d)
}

/// Gradient of [`kl_divergence`]`(target, f(x, params))` with `target` held fixed.
pub fn backward_kl(params: &ParamSet, cache: &ActivationCache, target: &SoftmaxOutput) -> Result<GradSet> {
    let mut d = raw_softmax(cache.logits());
    check_same_shape(&d, target.probs(), "KL gradient operands")?;
    let k = target.rows().max(1) as f64;
    for (i, p_row) in target.probs().iter_rows().enumerate() {
        let q_row = d.row_mut(i);
        let live_mass: f64 = p_row
            .iter()
            .zip(q_row.iter())
            .filter(|&(_, &q)| q >= LOG_FLOOR)
            .map(|(&p, _)| p)
            .sum();
        for (q, &p) in q_row.iter_mut().zip(p_row) {
            let own = if *q >= LOG_FLOOR { p } else { 0.0 };
            *q = (*q * live_mass - own) / k;
        }
    }
    backward_from_logits(params, cache, d)
}
