//! Minimal dense numerics in 64-bit floats.

mod adam;
mod gradcheck;
mod matrix;
mod mlp;

pub use adam::{adam_step, lr_schedule, AdamState, DECAY_EVERY_EPOCHS, DECAY_FACTOR};
pub use gradcheck::{finite_diff_grad, max_relative_error, relative_error};
pub use matrix::{l2_normalize_rows, l2_normalize_rows_backward, Matrix, MIN_ROW_NORM};
pub use mlp::{
    head_backward, head_forward, mlp_backward, mlp_forward, sigmoid, EncoderParams, ForwardCache,
    Layer,
};
