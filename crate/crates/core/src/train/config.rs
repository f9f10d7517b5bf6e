use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::InvalidArgument(format!("unknown optimizer `{other}` (expected adam|sgd)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Stop after this many optimizer steps (the current epoch is still
    /// evaluated and recorded).
    pub max_steps: Option<usize>,
    pub alpha_recon: Option<f64>,
    pub alpha_pupil: Option<f64>,
    pub l2_coeff: Option<f64>,
    /// Standardize the gaze head against training-target statistics.
    pub fit_scaler: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            base_lr: 1e-4,
            decay_factor: 0.9,
            decay_every: 6,
            batch_size: 64,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            clip_norm: Some(1.0),
            max_steps: None,
            alpha_recon: None,
            alpha_pupil: None,
            l2_coeff: None,
            fit_scaler: true,
        }
    }
}

impl TrainConfig {
    /// Desk-scale defaults: same schedule shape, larger steps on small batches.
    pub fn desk() -> Self {
        TrainConfig {
            base_lr: 1e-3,
            batch_size: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("base_lr = {} must be positive", self.base_lr));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad(format!("decay_factor = {} must be in (0, 1]", self.decay_factor));
        }
        if self.decay_every == 0 {
            return bad("decay_every must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip_norm = {c} must be positive"));
            }
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be at least 1".into());
        }
        for (name, v) in [("alpha_recon", self.alpha_recon), ("alpha_pupil", self.alpha_pupil), ("l2_coeff", self.l2_coeff)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return bad(format!("{name} = {v} must be finite and non-negative"));
                }
            }
        }
        Ok(())
    }
}

/// `base_lr · decay_factor^⌊epoch / decay_every⌋`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::InvalidArgument(format!("epoch {epoch} outside 0..{}", cfg.epochs)));
    }
    Ok(cfg.base_lr * cfg.decay_factor.powi((epoch / cfg.decay_every) as i32))
}

pub const SCHEDULE_FORMULA: &str = "lr = base_lr * decay_factor^floor(epoch / decay_every)";
