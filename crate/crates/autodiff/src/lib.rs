//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Expressions are recorded on an explicit [`Graph`]; [`Graph::backward`]
//! walks it in reverse. Passing `create_graph = true` records the backward
//! computation itself, which is what makes Hessian-vector products and
//! gradients through a virtual gradient step possible.
//!
//! ```
//! use dcg_autodiff::{Graph, Tensor};
//!
//! let g = Graph::new();
//! let theta = g.param(Tensor::vector(vec![1.0, 1.0]).unwrap());
//! let f = theta.dot(theta).unwrap();
//! let grads = g.backward(f, &[theta], false).unwrap();
//! assert_eq!(grads.tensors()[0].data(), &[2.0, 2.0]);
//! ```

mod check;
mod error;
mod graph;
mod ops;
mod tensor;

pub use check::finite_difference_check;
pub use error::{AutodiffError, Result};
pub use graph::{Gradients, Graph, NodeId, Var};
pub use ops::{forward_op, OpKind};
pub use tensor::Tensor;
