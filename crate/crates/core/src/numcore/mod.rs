//! Dense matrices, a reverse-mode tape, parameter storage, finite-difference
//! checking and checkpoint IO.

pub mod checkpoint;
pub mod gradcheck;
pub mod params;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_params, rel_err, GradCheckReport, GradEntry};
pub use params::{init_rng, Grads, ParamId, ParamStore};
pub use tape::{sigmoid, NodeId, Tape};
pub use tensor::Tensor2;
