//! Neural-network kernel: layers, activations, masks, loss and backprop.

pub mod activation;
pub mod init;
pub mod layer;
pub mod loss;
pub mod mask;
pub mod network;

pub use activation::{rsl_activation, Activation, Mode, RslParams};
pub use init::kaiming_uniform_init;
pub use layer::{Layer, LayerKind, LayerSpec};
pub use loss::{accuracy, softmax_xent};
pub use mask::UnitMask;
pub use network::{Backward, ForwardCache, MaskedNetwork, ParamKind};
