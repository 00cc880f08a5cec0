//! The individual updates of one noise-tolerant training step.
//!
//! Per mini-batch `(X, Y)`: every synthetic label set `Y_m` yields an inner
//! SGD step `theta'_m = theta - alpha * grad CE(X, Y_m; theta)`. The meta loss
//! averages `KL(target || f(X; theta'_m))` over `m`, `theta` takes a plain SGD
//! step on it, then a momentum step on the ordinary cross entropy, then the
//! teacher tracks the student by EMA.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::noise::SyntheticLabelSet;
use crate::tensor::{
    backward_ce, backward_kl, cross_entropy, finite_diff_grad, forward, kl_divergence, momentum_step, sgd_step,
    GradSet, Matrix, MlpSpec, MomentumOptState, ParamSet, SoftmaxOutput,
};

use super::hyper::MetaGradMode;

/// Exponential moving average of the student.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherState {
    pub params: ParamSet,
}

impl TeacherState {
    pub fn new(student: &ParamSet) -> Self {
        Self {
            params: student.clone(),
        }
    }
}

/// Frozen best model of an earlier iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MentorState {
    pub params: ParamSet,
    /// Free-form description of where the parameters came from.
    pub source: String,
}

/// One vanilla SGD step on cross entropy against `y_hat`.
pub fn meta_train_step(spec: &MlpSpec, theta: &ParamSet, x: &Matrix, y_hat: &Matrix, alpha: f64) -> Result<ParamSet> {
    let (cache, _) = forward(spec, theta, x)?;
    let grad = backward_ce(theta, &cache, y_hat)?;
    sgd_step(theta, &grad, alpha)
}

/// `KL(target || f(X; theta'))`, averaged over the batch.
pub fn consistency_loss(spec: &MlpSpec, theta_prime: &ParamSet, x: &Matrix, target: &SoftmaxOutput) -> Result<f64> {
    let (_, out) = forward(spec, theta_prime, x)?;
    kl_divergence(target, &out)
}

fn meta_loss_only(
    spec: &MlpSpec,
    theta: &ParamSet,
    x: &Matrix,
    variants: &SyntheticLabelSet,
    target: &SoftmaxOutput,
    alpha: f64,
) -> Result<f64> {
    if variants.is_empty() {
        return Ok(0.0);
    }
    let (cache, _) = forward(spec, theta, x)?;
    let mut total = 0.0;
    for y_hat in &variants.variants {
        let g = backward_ce(theta, &cache, y_hat)?;
        let theta_m = sgd_step(theta, &g, alpha)?;
        total += consistency_loss(spec, &theta_m, x, target)?;
    }
    Ok(total / variants.len() as f64)
}

/// Meta loss and its gradient with respect to `theta`.
///
/// `target` is the consistency target for `x` (teacher predictions, or a
/// teacher/mentor blend); it does not depend on `theta`. Synthetic labels are
/// fixed by `variants`, so `FullFd` differences a deterministic function.
pub fn meta_loss_and_grad(
    spec: &MlpSpec,
    theta: &ParamSet,
    x: &Matrix,
    variants: &SyntheticLabelSet,
    target: &SoftmaxOutput,
    alpha: f64,
    mode: MetaGradMode,
    fd_eps: f64,
) -> Result<(f64, GradSet)> {
    let mut zero = theta.clone();
    zero.scale(0.0);
    if variants.is_empty() {
        return Ok((0.0, zero));
    }
    let m = variants.len() as f64;
    let (loss, grad) = match mode {
        MetaGradMode::FirstOrder => {
            let (cache, _) = forward(spec, theta, x)?;
            let mut loss = 0.0;
            let mut grad = zero;
            for y_hat in &variants.variants {
                let g_inner = backward_ce(theta, &cache, y_hat)?;
                let theta_m = sgd_step(theta, &g_inner, alpha)?;
                let (cache_m, out_m) = forward(spec, &theta_m, x)?;
                loss += kl_divergence(target, &out_m)?;
                let g_m = backward_kl(&theta_m, &cache_m, target)?;
                grad.add_scaled_in_place(&g_m, 1.0)?;
            }
            grad.scale(1.0 / m);
            (loss / m, grad)
        }
        MetaGradMode::FullFd => {
            let loss = meta_loss_only(spec, theta, x, variants, target, alpha)?;
            let grad = finite_diff_grad(|p| meta_loss_only(spec, p, x, variants, target, alpha), theta, fd_eps)?;
            (loss, grad)
        }
    };
    if !loss.is_finite() || !grad.all_finite() {
        return Err(Error::Numeric("meta loss or gradient is not finite".into()));
    }
    Ok((loss, grad))
}

/// Plain SGD on the meta gradient.
pub fn meta_update(theta: &ParamSet, grad: &GradSet, eta: f64) -> Result<ParamSet> {
    sgd_step(theta, grad, eta)
}

#[derive(Debug, Clone)]
pub struct ClassificationStep {
    pub params: ParamSet,
    /// Cross entropy before the update.
    pub loss: f64,
    /// Predictions before the update.
    pub predictions: Vec<usize>,
}

/// Momentum SGD with weight decay on the cross entropy of `(x, y)`, at the
/// learning rate held in `opt`.
pub fn classification_update(
    spec: &MlpSpec,
    theta: &ParamSet,
    opt: &mut MomentumOptState,
    x: &Matrix,
    y: &Matrix,
) -> Result<ClassificationStep> {
    let (cache, out) = forward(spec, theta, x)?;
    let loss = cross_entropy(&out, y)?;
    let grad = backward_ce(theta, &cache, y)?;
    let params = momentum_step(opt, theta, &grad)?;
    Ok(ClassificationStep {
        params,
        loss,
        predictions: out.predictions(),
    })
}

/// `teacher <- gamma * teacher + (1 - gamma) * theta`
pub fn ema_update(teacher: &mut TeacherState, theta: &ParamSet, gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Input(format!("EMA coefficient {gamma} outside [0, 1]")));
    }
    if !teacher.params.same_shape(theta) {
        return Err(Error::Dimension("teacher and student layouts differ".into()));
    }
    for (t, &s) in teacher.params.iter_mut().zip(theta.iter()) {
        *t = gamma * *t + (1.0 - gamma) * s;
    }
    Ok(())
}

/// `lambda * teacher + (1 - lambda) * mentor`, row by row.
pub fn blend_targets(teacher: &SoftmaxOutput, mentor: &SoftmaxOutput, lambda: f64) -> Result<SoftmaxOutput> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Input(format!("blend weight {lambda} outside [0, 1]")));
    }
    let (t, m) = (teacher.probs(), mentor.probs());
    if t.shape() != m.shape() {
        return Err(Error::Dimension(format!(
            "teacher {:?} vs mentor {:?} predictions",
            t.shape(),
            m.shape()
        )));
    }
    let values = t
        .values()
        .iter()
        .zip(m.values())
        .map(|(&a, &b)| lambda * a + (1.0 - lambda) * b)
        .collect();
    SoftmaxOutput::new(Matrix::from_vec(t.rows(), t.cols(), values)?)
}

/// Samples whose mentor probability on their (noisy) label exceeds `tau`.
pub fn filter_dataset(dataset: &Dataset, spec: &MlpSpec, mentor: &MentorState, tau: f64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Input(format!("threshold {tau} outside [0, 1]")));
    }
    let (_, out) = forward(spec, &mentor.params, dataset.features())?;
    let keep: Vec<usize> = dataset
        .labels()
        .iter()
        .enumerate()
        .filter(|&(i, &y)| out.probs().get(i, y) > tau)
        .map(|(i, _)| i)
        .collect();
    Ok(dataset.subset(&keep))
}
