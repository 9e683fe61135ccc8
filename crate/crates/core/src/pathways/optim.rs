use serde::{Deserialize, Serialize};

use super::features::FeatureOptions;
use super::model::PathwayModel;
use crate::error::{Error, Result};

/// Step size the original VGG-scale setup used; kept for reference only.
pub const REFERENCE_LR: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Step size for the summed (not averaged) per-pixel loss.
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub iters_per_round: usize,
    pub rounds: usize,
    pub hidden: usize,
    /// Subtract each feature's per-image mean before the first layer.
    pub center_features: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 15,
            iters_per_round: 2000,
            rounds: 3,
            hidden: 16,
            center_features: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn feature_options(&self) -> FeatureOptions {
        FeatureOptions {
            center: self.center_features,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidParam(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParam(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidParam("weight_decay must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParam("batch_size must be >= 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidParam("hidden must be >= 1".into()));
        }
        Ok(())
    }
}

/// SGD with momentum and L2 weight decay:
/// `v <- momentum * v - lr * (g + wd * w)`, `w <- w + v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(param_count: usize) -> Self {
        Self {
            velocity: vec![0.0; param_count],
        }
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    /// Leaves the model untouched when any gradient is non-finite.
    pub fn step(&mut self, model: &mut PathwayModel, grads: &[f64], cfg: &TrainConfig) -> Result<()> {
        if grads.len() != model.params().len() || self.velocity.len() != grads.len() {
            return Err(Error::Dimension("gradient and parameter counts differ".into()));
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::InvalidValue {
                index,
                value: grads[index],
            });
        }
        for ((w, v), g) in model
            .params_mut()
            .iter_mut()
            .zip(self.velocity.iter_mut())
            .zip(grads)
        {
            *v = cfg.momentum * *v - cfg.lr * (g + cfg.weight_decay * *w);
            *w += *v;
        }
        Ok(())
    }
}
