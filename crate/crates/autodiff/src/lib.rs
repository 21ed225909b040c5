//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The engine is a tape ([`Graph`]) of operator records. It provides the
//! handful of operators a small residual CNN needs, a gradient reversal
//! operator, and a central-difference checker ([`grad_check`]) used to
//! validate every backward rule.

mod error;
mod gradcheck;
mod graph;
mod kernels;
mod tensor;

pub use error::{AutodiffError, Result};
pub use gradcheck::{grad_check, grad_check_against, relative_error, DEFAULT_STEP, RELATIVE_FLOOR};
pub use graph::{GradMap, Graph, NodeId, Op};
pub use tensor::Tensor;
