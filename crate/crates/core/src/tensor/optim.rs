//! Plain and momentum SGD.

use super::mlp::{GradSet, ParamSet};
use crate::error::{Error, Result};

/// `params - step * grads`; the input is left untouched.
pub fn sgd_step(params: &ParamSet, grads: &GradSet, step: f64) -> Result<ParamSet> {
    params.add_scaled(grads, -step)
}

/// Heavy-ball SGD with L2 weight decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct MomentumOptState {
    velocity: GradSet,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr: f64,
}

impl MomentumOptState {
    pub fn new(params: &ParamSet, momentum: f64, weight_decay: f64, lr: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Input(format!("momentum {momentum} outside [0, 1)")));
        }
        if !(weight_decay >= 0.0) {
            return Err(Error::Input(format!("weight decay {weight_decay} is negative")));
        }
        if !(lr > 0.0) {
            return Err(Error::Input(format!("learning rate {lr} must be positive")));
        }
        let mut velocity = params.clone();
        velocity.scale(0.0);
        Ok(Self {
            velocity,
            momentum,
            weight_decay,
            lr,
        })
    }

    pub fn velocity(&self) -> &GradSet {
        &self.velocity
    }
}

/// `v <- mu v + (g + wd * params)`, then `params - lr * v`.
pub fn momentum_step(state: &mut MomentumOptState, params: &ParamSet, grads: &GradSet) -> Result<ParamSet> {
    if !params.same_shape(grads) || !params.same_shape(&state.velocity) {
        return Err(Error::Dimension(
            "optimizer state, parameters and gradients differ in layout".into(),
        ));
    }
    let (mu, wd) = (state.momentum, state.weight_decay);
    for ((v, &g), &p) in state.velocity.iter_mut().zip(grads.iter()).zip(params.iter()) {
        *v = mu * *v + (g + wd * p);
    }
    params.add_scaled(&state.velocity, -state.lr)
}
