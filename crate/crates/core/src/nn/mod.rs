//! Minimal dense neural-network toolkit: matrices, a reverse-mode tape,
//! optimisers and a binary checkpoint container.

pub mod checkpoint;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use optim::{Adam, Sgd};
pub use tape::{grad_norm, Grads, ParamId, ParamStore, Tape, Var};
pub use tensor::Mat;
