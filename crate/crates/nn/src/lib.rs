//! Minimal CNN core for spectrogram classification: 3x3 same-padded
//! convolutions, batch norm, ELU / leaky-ReLU, max pooling, dropout, dense
//! layers and a sigmoid output, trained with binary cross-entropy and Adam.
//!
//! Gradients are exact and hand-derived per layer. Models are generic over
//! [`Real`] so the same code runs in `f32` for training and `f64` for
//! finite-difference verification.

pub mod checkpoint;
pub mod error;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use error::{NnError, Result};
pub use layers::{Activation, Layer, LayerSpec};
pub use loss::bce_loss;
pub use model::{Architecture, Mode, Model, ModelConfig};
pub use optim::{effective_lr, AdamState, BASE_LR, EPOCH_DECAY};
pub use scalar::Real;
pub use tensor::Tensor;
