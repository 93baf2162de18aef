//! Dense tensors and reverse-mode automatic differentiation.
//!
//! Everything is single-threaded within a [`Graph`]; separate graphs share
//! no state and can live on separate threads.

mod graph;
mod param;
mod scalar;
mod tensor;

pub use graph::{Gradients, Graph, NodeId};
pub use param::{Param, ParamId, Parameterized};
pub use scalar::Scalar;
pub use tensor::{Tensor, TensorError};
