//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] is rebuilt for every forward pass. Leaves are either
//! constants or parameters; [`Tape::backward`] returns one gradient per
//! parameter, in registration order.

mod check;
mod matrix;
mod tape;

pub use check::{
    finite_difference_check, finite_difference_check_with, relative_error, relative_error_norm,
};
pub use matrix::{dot, l2_norm, Matrix};
pub use tape::{Gradients, NodeId, Tape, EPSILON_NORM};
