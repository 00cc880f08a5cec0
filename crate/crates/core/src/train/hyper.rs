//! Hyper-parameters and their per-step schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear ramp from 0 to `max` over `warmup_epochs`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaSchedule {
    pub max: f64,
    pub warmup_epochs: f64,
}

impl EtaSchedule {
    /// `progress` is measured in (fractional) epochs.
    pub fn at(&self, progress: f64) -> f64 {
        if self.warmup_epochs <= 0.0 || progress >= self.warmup_epochs {
            self.max
        } else {
            self.max * progress / self.warmup_epochs
        }
    }
}

/// EMA coefficient: `warmup` for the first `warmup_epochs`, `after` later.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSchedule {
    pub warmup: f64,
    pub after: f64,
    pub warmup_epochs: u32,
}

impl GammaSchedule {
    pub fn at(&self, epoch: u32) -> f64 {
        if epoch < self.warmup_epochs {
            self.warmup
        } else {
            self.after
        }
    }
}

/// Teacher weight in blended targets, linear in the epoch from 0 at the first
/// epoch to `max` at the last one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub max: f64,
}

impl LambdaSchedule {
    pub fn at(&self, epoch: u32, epochs: u32) -> f64 {
        if epochs <= 1 {
            return self.max;
        }
        self.max * epoch as f64 / (epochs - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaGradMode {
    /// Treat the inner step as a constant offset.
    FirstOrder,
    /// Central differences of the full composite meta loss (tiny nets only).
    FullFd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlntHyper {
    /// Inner (synthetic-label) step size.
    pub alpha: f64,
    /// Classification learning rate before decay.
    pub beta: f64,
    pub eta: EtaSchedule,
    pub gamma: GammaSchedule,
    /// Number of synthetic label sets per mini-batch.
    pub m: usize,
    pub rho_fraction: f64,
    pub tau: f64,
    pub lambda: LambdaSchedule,
    /// Neighbour pool size for label transfer.
    pub neighbors: usize,
    pub batch_size: usize,
    pub epochs: u32,
    /// Epoch from which `beta` is divided by 10.
    pub lr_decay_epoch: u32,
    pub momentum: f64,
    pub weight_decay: f64,
    pub meta_mode: MetaGradMode,
    pub fd_eps: f64,
}

impl Default for MlntHyper {
    /// Desk-scale protocol: 30 epochs with decay at epoch 20, warm-ups over
    /// the first 5 epochs, batch 64.
    fn default() -> Self {
        Self {
            alpha: 0.2,
            beta: 0.2,
            eta: EtaSchedule {
                max: 0.4,
                warmup_epochs: 5.0,
            },
            gamma: GammaSchedule {
                warmup: 0.99,
                after: 0.999,
                warmup_epochs: 5,
            },
            m: 10,
            rho_fraction: 0.5,
            tau: 0.3,
            lambda: LambdaSchedule { max: 0.5 },
            neighbors: 10,
            batch_size: 64,
            epochs: 30,
            lr_decay_epoch: 20,
            momentum: 0.9,
            weight_decay: 1e-4,
            meta_mode: MetaGradMode::FirstOrder,
            fd_eps: 1e-5,
        }
    }
}

fn range(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Range(msg()))
    }
}

impl MlntHyper {
    pub fn validate(&self) -> Result<()> {
        range(self.alpha >= 0.0 && self.alpha.is_finite(), || {
            format!("alpha = {} must be >= 0", self.alpha)
        })?;
        range(self.beta > 0.0 && self.beta.is_finite(), || {
            format!("beta = {} must be > 0", self.beta)
        })?;
        range(self.eta.max >= 0.0 && self.eta.max.is_finite(), || {
            format!("eta_max = {} must be >= 0", self.eta.max)
        })?;
        range(self.eta.warmup_epochs >= 0.0, || "eta warm-up must be >= 0".into())?;
        for g in [self.gamma.warmup, self.gamma.after] {
            range((0.0..=1.0).contains(&g), || format!("gamma = {g} outside [0, 1]"))?;
        }
        range((0.0..=1.0).contains(&self.rho_fraction), || {
            format!("rho_fraction = {} outside [0, 1]", self.rho_fraction)
        })?;
        range((0.0..=1.0).contains(&self.tau), || {
            format!("tau = {} outside [0, 1]", self.tau)
        })?;
        range((0.0..=1.0).contains(&self.lambda.max), || {
            format!("lambda_max = {} outside [0, 1]", self.lambda.max)
        })?;
        range(self.neighbors >= 1, || "neighbors must be >= 1".into())?;
        range(self.batch_size >= 1, || "batch_size must be >= 1".into())?;
        range(self.epochs >= 1, || "epochs must be >= 1".into())?;
        range((0.0..1.0).contains(&self.momentum), || {
            format!("momentum = {} outside [0, 1)", self.momentum)
        })?;
        range(self.weight_decay >= 0.0, || "weight_decay must be >= 0".into())?;
        range(self.fd_eps > 0.0, || "fd_eps must be > 0".into())?;
        Ok(())
    }

    pub fn beta_at(&self, epoch: u32) -> f64 {
        if epoch >= self.lr_decay_epoch {
            self.beta / 10.0
        } else {
            self.beta
        }
    }
}

/// Optional per-iteration replacements for a few hyper-parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperOverride {
    pub iteration: u32,
    pub m: Option<usize>,
    pub rho_fraction: Option<f64>,
    pub tau: Option<f64>,
    pub eta_max: Option<f64>,
    pub lambda_max: Option<f64>,
    pub epochs: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationPlan {
    pub num_iterations: u32,
    pub overrides: Vec<HyperOverride>,
}

impl Default for IterationPlan {
    fn default() -> Self {
        Self {
            num_iterations: 3,
            overrides: Vec::new(),
        }
    }
}

impl IterationPlan {
    pub fn single() -> Self {
        Self {
            num_iterations: 1,
            overrides: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        range(self.num_iterations >= 1, || "num_iterations must be >= 1".into())?;
        for o in &self.overrides {
            range(o.iteration >= 1 && o.iteration <= self.num_iterations, || {
                format!(
                    "override for iteration {} outside 1..={}",
                    o.iteration, self.num_iterations
                )
            })?;
        }
        Ok(())
    }

    /// Hyper-parameters for the 1-based `iteration`.
    pub fn hyper_for(&self, base: &MlntHyper, iteration: u32) -> MlntHyper {
        let mut h = base.clone();
        for o in self.overrides.iter().filter(|o| o.iteration == iteration) {
            if let Some(v) = o.m {
                h.m = v;
            }
            if let Some(v) = o.rho_fraction {
                h.rho_fraction = v;
            }
            if let Some(v) = o.tau {
                h.tau = v;
            }
            if let Some(v) = o.eta_max {
                h.eta.max = v;
            }
            if let Some(v) = o.lambda_max {
                h.lambda.max = v;
            }
            if let Some(v) = o.epochs {
                h.epochs = v;
            }
        }
        h
    }
}
