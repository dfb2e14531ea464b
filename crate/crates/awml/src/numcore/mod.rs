//! Numerical core: tensors, reverse-mode autodiff, layers, Adam, checkpoints.
//!
//! Design constraints that shaped this module:
//!
//! * Everything is f64. Gradient checks against central finite differences
//!   need the headroom, and the experiment scale here never makes f32 worth
//!   a second code path.
//! * Differentiation is define-by-run on a [`Tape`]: operations execute
//!   eagerly and record themselves; [`Tape::backward`] walks the record in
//!   reverse. Backpropagation through time falls out of unrolling the LSTM
//!   onto the tape, with no truncation.
//! * Parameters live in a [`ParamSet`], an insertion-ordered name → tensor
//!   map. Ordering is deterministic, which makes checkpoints, EMA blends,
//!   and optimizer state unambiguous across processes.

mod adam;
mod checkpoint;
mod fd;
mod layers;
mod matmul;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use fd::{finite_diff_grad, max_rel_err};
pub use layers::{forward_lstm_mlp, LstmState, LstmStackSpec, MlpSpec};
pub use matmul::{matmul_acc, matmul_at_acc, matmul_bt_acc};
pub use params::{ema_blend, ParamSet};
pub use tape::{masked_row_terms, sigmoid, softplus, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("shape error in {context}: expected {expected}, got {got}")]
    Shape { context: &'static str, expected: String, got: String },

    #[error("non-finite value in {context} at flat index {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),

    #[error("parameter schema mismatch in {context}: {detail}")]
    Schema { context: &'static str, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("checkpoint parse: {0}")]
    Parse(String),
}
