//! Pointwise activations: ReLU, identity, and the randomized smooth-leaky family.
//!
//! The smooth-leaky activation blends an identity branch and a leaky branch
//! through a sigmoid-power gate,
//!
//! ```text
//! g(z)   = (1 + exp(-c z))^(-p)
//! rsl(z) = g(z) z + (1 - g(z)) a z
//! ```
//!
//! where the leak slope `a` is drawn per unit from `U[lower, upper]` in
//! training mode and fixed to the midpoint in evaluation mode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Train/eval switch. Only the randomized activation reads it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Shape and slope-range parameters of the smooth-leaky activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RslParams {
    pub c: f64,
    pub p: f64,
    pub lower: f64,
    pub upper: f64,
}

impl RslParams {
    pub fn new(c: f64, p: f64, lower: f64, upper: f64) -> Result<Self> {
        let params = RslParams { c, p, lower, upper };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::config(format!("rsl: c must be > 0, got {}", self.c)));
        }
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::config(format!("rsl: p must be > 0, got {}", self.p)));
        }
        if !(self.lower > 0.0) {
            return Err(Error::config(format!(
                "rsl: lower slope must be > 0, got {}",
                self.lower
            )));
        }
        if self.lower > self.upper || !self.upper.is_finite() {
            return Err(Error::config(format!(
                "rsl: lower slope {} exceeds upper slope {}",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// Leak slope for one unit.
    pub fn sample_slope<R: Rng + ?Sized>(&self, mode: Mode, rng: &mut R) -> f64 {
        match mode {
            Mode::Eval => self.midpoint(),
            Mode::Train if self.lower == self.upper => self.lower,
            Mode::Train => rng.gen_range(self.lower..=self.upper),
        }
    }

    /// Returns `(g(z), sigmoid(c z))`.
    fn gate(&self, z: f64) -> (f64, f64) {
        let u = self.c * z;
        // softplus(-u) = ln(1 + exp(-u)), evaluated without overflow
        let sp = if u > 0.0 {
            (-u).exp().ln_1p()
        } else {
            -u + u.exp().ln_1p()
        };
        let sig = if u >= 0.0 {
            1.0 / (1.0 + (-u).exp())
        } else {
            let e = u.exp();
            e / (1.0 + e)
        };
        ((-self.p * sp).exp(), sig)
    }

    pub fn value(&self, z: f64, slope: f64) -> f64 {
        let (g, _) = self.gate(z);
        g * z + (1.0 - g) * slope * z
    }

    pub fn derivative(&self, z: f64, slope: f64) -> f64 {
        let (g, sig) = self.gate(z);
        let dg = self.p * self.c * g * (1.0 - sig);
        slope + (1.0 - slope) * (g + z * dg)
    }
}

/// Activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Activation {
    Relu,
    Rsl(RslParams),
    /// No nonlinearity (output layer, or test fixtures).
    None,
}

impl Activation {
    /// Per-unit leak slopes for one forward call. Empty unless randomized.
    pub fn sample_slopes<R: Rng + ?Sized>(&self, units: usize, mode: Mode, rng: &mut R) -> Vec<f64> {
        match self {
            Activation::Rsl(p) => (0..units).map(|_| p.sample_slope(mode, rng)).collect(),
            _ => Vec::new(),
        }
    }

    #[inline]
    pub fn value(&self, z: f64, slope: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Rsl(p) => p.value(z, slope),
            Activation::None => z,
        }
    }

    #[inline]
    pub fn derivative(&self, z: f64, slope: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Rsl(p) => p.derivative(z, slope),
            Activation::None => 1.0,
        }
    }

    /// Evaluation-mode output of a single unit.
    pub fn eval_value(&self, z: f64) -> f64 {
        match self {
            Activation::Rsl(p) => p.value(z, p.midpoint()),
            other => other.value(z, 0.0),
        }
    }
}

/// Applies the smooth-leaky activation to `z`, treating axis 1 as the unit
/// axis (features for `[B, d]`, channels for `[B, C, H, W]`). One slope is
/// drawn per unit and shared across the batch and spatial positions.
pub fn rsl_activation<R: Rng + ?Sized>(
    z: &Tensor,
    params: &RslParams,
    mode: Mode,
    rng: &mut R,
) -> Result<Tensor> {
    params.validate()?;
    let shape = z.shape();
    if shape.len() < 2 {
        return Err(Error::Shape {
            context: "rsl_activation",
            expected: vec![0, 0],
            actual: shape.to_vec(),
        });
    }
    let units = shape[1];
    let inner: usize = shape[2..].iter().product();
    let slopes: Vec<f64> = (0..units).map(|_| params.sample_slope(mode, rng)).collect();
    let mut out = z.clone();
    for (idx, v) in out.data_mut().iter_mut().enumerate() {
        let unit = (idx / inner) % units;
        *v = params.value(*v, slopes[unit]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_maps_to_zero() {
        let p = RslParams::new(0.8, 1.0, 0.3, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = Tensor::zeros(&[3, 4]);
        let out = rsl_activation(&z, &p, Mode::Train, &mut rng).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sharp_gate_approaches_leaky_relu() {
        let p = RslParams::new(50.0, 1.0, 0.2, 0.2).unwrap();
        assert!((p.value(5.0, 0.2) - 5.0).abs() < 1e-9);
        assert!((p.value(-5.0, 0.2) - (-5.0 * 0.2)).abs() < 1e-9);
    }

    #[test]
    fn unit_slope_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(c, p) in &[(0.1, 0.1), (1.0, 1.0), (3.0, 5.0), (0.5, 0.5)] {
            let params = RslParams::new(c, p, 1.0, 1.0).unwrap();
            let z = Tensor::from_vec(&[1, 5], vec![-3.0, -0.5, 0.0, 0.7, 9.0]).unwrap();
            let out = rsl_activation(&z, &params, Mode::Train, &mut rng).unwrap();
            for (a, b) in out.data().iter().zip(z.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(RslParams::new(1.0, 1.0, 0.6, 0.3).is_err());
        assert!(RslParams::new(0.0, 1.0, 0.3, 0.6).is_err());
    }

    #[test]
    fn eval_mode_uses_midpoint() {
        let p = RslParams::new(0.8, 1.0, 0.3, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((p.sample_slope(Mode::Eval, &mut rng) - 0.45).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let p = RslParams::new(3.0, 5.0, 0.125, 0.333).unwrap();
        for &z in &[-4.0, -1.3, -0.2, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (p.value(z + h, 0.2) - p.value(z - h, 0.2)) / (2.0 * h);
            assert!((fd - p.derivative(z, 0.2)).abs() < 1e-6, "z={z}");
        }
    }

    #[test]
    fn derivative_positive_for_listed_configurations() {
        // (c, p, lower, upper) configurations used across the benchmarks
        let configs = [
            (0.8, 1.0, 0.3, 0.6),
            (2.0, 0.8, 0.3, 0.6),
            (0.8, 3.0, 0.5, 0.5),
            (0.5, 0.5, 0.673, 2.673),
            (0.5, 0.5, 0.3, 0.3),
            (3.0, 5.0, 0.125, 0.333),
        ];
        for &(c, pp, lo, hi) in &configs {
            let p = RslParams::new(c, pp, lo, hi).unwrap();
            for &slope in &[lo, 0.5 * (lo + hi), hi] {
                for i in 0..=2000 {
                    let z = -20.0 + 0.02 * i as f64;
                    assert!(p.derivative(z, slope) > 0.0, "{c} {pp} {lo} {hi} z={z}");
                }
            }
        }
    }
}
