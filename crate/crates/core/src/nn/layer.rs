use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::mask::UnitMask;
use crate::tensor::Tensor;

/// Structural description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerKind {
    Linear {
        in_dim: usize,
        out_dim: usize,
    },
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        padding: usize,
    },
    MaxPool2d {
        size: usize,
    },
    Flatten,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Activation,
    /// Carries a unit mask. Only hidden linear layers may be masked.
    pub masked: bool,
}

impl LayerSpec {
    pub fn linear(in_dim: usize, out_dim: usize, activation: Activation, masked: bool) -> Self {
        LayerSpec {
            kind: LayerKind::Linear { in_dim, out_dim },
            activation,
            masked,
        }
    }

    pub fn conv(in_ch: usize, out_ch: usize, kernel: usize, padding: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Conv2d {
                in_ch,
                out_ch,
                kernel,
                padding,
            },
            activation,
            masked: false,
        }
    }

    pub fn maxpool(size: usize) -> Self {
        LayerSpec {
            kind: LayerKind::MaxPool2d { size },
            activation: Activation::None,
            masked: false,
        }
    }

    pub fn flatten() -> Self {
        LayerSpec {
            kind: LayerKind::Flatten,
            activation: Activation::None,
            masked: false,
        }
    }
}

/// Fully connected layer. `weight` is `[out, in]`; row `j` holds the incoming
/// weights of unit `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
    pub mask: Option<UnitMask>,
}

impl Linear {
    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Stride-1 2-D convolution. `weight` is `[out_ch, in_ch, k, k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub padding: usize,
    pub activation: Activation,
}

impl Conv2d {
    pub fn in_ch(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_ch(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Linear(Linear),
    Conv2d(Conv2d),
    MaxPool2d { size: usize },
    Flatten,
}

impl Layer {
    pub fn activation(&self) -> Activation {
        match self {
            Layer::Linear(l) => l.activation,
            Layer::Conv2d(c) => c.activation,
            _ => Activation::None,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Linear(_) | Layer::Conv2d(_))
    }
}
