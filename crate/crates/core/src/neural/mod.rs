//! Small hand-differentiated networks: dense layers, a branch/trunk
//! operator network, a stacked LSTM router, AdamW and checkpoints.
//!
//! Gradients live outside the models as `Vec<Tensor>` aligned with
//! [`Parameterized::parameters`].

mod checkpoint;
mod deeponet;
mod dense;
mod lstm;
mod optim;
mod tensor;

pub use checkpoint::{Model, ModelCheckpoint, ModelKind, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use deeponet::{DeepOnet, DeepOnetArch, DeepOnetCache, NeuralSolver};
pub use dense::{Activation, Dense, Mlp, MlpArch, MlpCache};
pub use lstm::{LstmLayer, LstmRouter, LstmState, RouterArch, StepCache};
pub use optim::{clip_global_norm, global_norm, AdamW};
pub use tensor::Tensor;

/// Models exposing their trainable tensors in a fixed order.
pub trait Parameterized {
    fn parameters(&self) -> Vec<&Tensor>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    /// Zero gradient buffers aligned with [`Parameterized::parameters`].
    fn zero_grads(&self) -> Vec<Tensor> {
        self.parameters().into_iter().map(Tensor::zeros_like).collect()
    }

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }
}
