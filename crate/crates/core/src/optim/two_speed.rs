//! Post-step delta scaling on newborn parameter slices for a warm-up window.

use serde::{Deserialize, Serialize};

use super::slices::ParamSlice;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoSpeedConfig {
    /// Delta multiplier.
    pub r: f64,
    /// Window length in optimizer steps.
    pub window: usize,
}

impl Default for TwoSpeedConfig {
    fn default() -> Self {
        TwoSpeedConfig { r: 5.0, window: 1955 }
    }
}

impl TwoSpeedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::config(format!("two_speed.r must be > 0, got {}", self.r)));
        }
        Ok(())
    }
}

/// `old + r * (new - old)`.
pub fn two_speed_apply(old: f64, new: f64, r: f64) -> f64 {
    old + r * (new - old)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Registration {
    slices: Vec<ParamSlice>,
    remaining: usize,
}

/// Registry of newborn slices currently inside their warm-up window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSpeed {
    config: TwoSpeedConfig,
    active: Vec<Registration>,
}

impl TwoSpeed {
    pub fn new(config: TwoSpeedConfig) -> Result<Self> {
        config.validate()?;
        Ok(TwoSpeed {
            config,
            active: Vec::new(),
        })
    }

    pub fn config(&self) -> TwoSpeedConfig {
        self.config
    }

    pub fn register(&mut self, slices: Vec<ParamSlice>) {
        if self.config.window > 0 && !slices.is_empty() {
            self.active.push(Registration {
                slices,
                remaining: self.config.window,
            });
        }
    }

    pub fn active_registrations(&self) -> usize {
        self.active.len()
    }

    /// Values of every registered slice before an optimizer step.
    pub fn capture(&self, params: &[&mut Tensor]) -> Vec<Vec<Vec<f64>>> {
        self.active
            .iter()
            .map(|reg| reg.slices.iter().map(|s| s.read(params[s.param])).collect())
            .collect()
    }

    /// Rescales the step just taken on registered slices and advances windows.
    /// `before` must come from [`Self::capture`] on the same parameters.
    pub fn finish_step(&mut self, params: &mut [&mut Tensor], before: Vec<Vec<Vec<f64>>>) {
        let r = self.config.r;
        for (reg, olds) in self.active.iter_mut().zip(before) {
            if r != 1.0 {
                for (s, old) in reg.slices.iter().zip(olds) {
                    let new = s.read(params[s.param]);
                    let scaled: Vec<f64> = old.iter().zip(&new).map(|(&o, &n)| two_speed_apply(o, n, r)).collect();
                    s.write(params[s.param], &scaled);
                }
            }
            reg.remaining -= 1;
        }
        self.active.retain(|reg| reg.remaining > 0);
    }
}
