//! Deterministic binary64 kernels: dense matrices, the LSTM cell and its
//! backward pass, softmax cross-entropy over sequences, Adam, a
//! finite-difference gradient checker and the checkpoint container.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod lstm;
mod mat;
mod params;
mod seq;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, Tensor};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use lstm::{
    lstm_step, lstm_step_clipped, run_backward, run_forward, run_states, sigmoid, LstmParams,
    LstmState, StepCache, GATE_ORDER,
};
pub use mat::{axpy, dot, norm2, Mat};
pub use params::{Params, TensorView};
pub(crate) use params::{prefixed, view};
pub use seq::{
    batch_loss_and_grads, log_softmax_at, seq_log_probs, seq_loss_and_grads, softmax, Dense,
    SeqGrads, SeqModel,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The crate-wide seeded generator.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
