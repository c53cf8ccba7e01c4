//! Minimal dense-network engine: batch normalization, a feature-gating
//! attention module, residual blocks, and fully connected layers, all with
//! exact hand-written gradients, plus the adaptive-moment optimizer and the
//! two-term curve loss.

pub mod io;
pub mod layers;
pub mod linalg;
pub mod loss;
pub mod optim;

pub use layers::{Mlp, MlpGrads, MlpSpec, Mode};
pub use linalg::Mat;
pub use loss::{loss_eq1, loss_eq1_grad, LossConfig, OUTPUT_DIM};
pub use optim::{adam_step, AdamState};
