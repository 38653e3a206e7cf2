use serde::{Deserialize, Serialize};

/// `lr0 * (1 + cos(pi * epoch / t_max)) / 2`, floored at zero past `t_max`.
pub fn cosine_lr(lr0: f64, epoch: f64, t_max: f64) -> f64 {
    if t_max <= 0.0 {
        return lr0;
    }
    let x = (epoch / t_max).clamp(0.0, 1.0);
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * x).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    Cosine,
}

impl LrSchedule {
    pub fn lr(&self, lr0: f64, epoch: f64, t_max: f64) -> f64 {
        match self {
            LrSchedule::Constant => lr0,
            LrSchedule::Cosine => cosine_lr(lr0, epoch, t_max),
        }
    }
}
