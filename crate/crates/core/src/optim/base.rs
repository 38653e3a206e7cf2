use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Adam moment buffers, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shapes: &[Vec<usize>]) -> Self {
        Self::with_betas(shapes, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(shapes: &[Vec<usize>], beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            step: 0,
            beta1,
            beta2,
            eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerState {
    Sgd,
    Adam(AdamState),
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, shapes: &[Vec<usize>]) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Adam => OptimizerState::Adam(AdamState::new(shapes)),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            OptimizerState::Sgd => OptimizerKind::Sgd,
            OptimizerState::Adam(_) => OptimizerKind::Adam,
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        match self {
            OptimizerState::Sgd => sgd_step(params, grads, lr),
            OptimizerState::Adam(s) => adam_step(params, grads, s, lr),
        }
    }
}

fn check(params: &[&mut Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape {
            context: "optimizer parameter count",
            expected: vec![params.len()],
            actual: vec![grads.len()],
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                context: "optimizer gradient",
                expected: p.shape().to_vec(),
                actual: g.shape().to_vec(),
            });
        }
        if !g.all_finite() {
            return Err(Error::NumericFault {
                layer: i,
                stage: "optimizer",
            });
        }
    }
    Ok(())
}

/// `theta <- theta - lr * g`.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
    check(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * d;
        }
    }
    Ok(())
}

/// Bias-corrected Adam update.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    check(params, grads)?;
    if state.m.len() != params.len() {
        return Err(Error::config("adam state does not match parameter list"));
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (k, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[k] = b1 * m[k] + (1.0 - b1) * d;
            v[k] = b2 * v[k] + (1.0 - b2) * d * d;
            let mh = m[k] / c1;
            let vh = v[k] / c2;
            *w -= lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(&[1], vec![v]).unwrap()
    }

    #[test]
    fn sgd_examples() {
        let mut p = scalar(1.0);
        sgd_step(&mut [&mut p], &[scalar(0.5)], 0.1).unwrap();
        assert!((p.data()[0] - 0.95).abs() < 1e-15);
        sgd_step(&mut [&mut p], &[scalar(0.0)], 0.1).unwrap();
        assert!((p.data()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_faults() {
        let mut p = scalar(1.0);
        let err = sgd_step(&mut [&mut p], &[scalar(f64::NAN)], 0.1).unwrap_err();
        assert!(err.is_numeric());
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        for g in [1e-3, 0.7, -42.0] {
            let mut p = scalar(0.0);
            let mut s = AdamState::new(&[vec![1]]);
            adam_step(&mut [&mut p], &[scalar(g)], &mut s, 0.01).unwrap();
            assert!((p.data()[0].abs() - 0.01).abs() < 1e-6);
            assert_eq!(p.data()[0].signum(), -g.signum());
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = scalar(3.0);
        let mut s = AdamState::new(&[vec![1]]);
        for _ in 0..20 {
            adam_step(&mut [&mut p], &[scalar(0.0)], &mut s, 0.1).unwrap();
        }
        assert_eq!(p.data()[0], 3.0);
    }
}
