//! Small deterministic dense-network engine: matrices, named parameters,
//! layer forward/backward, optimizers and finite-difference checking.

pub mod gradcheck;
pub mod matrix;
pub mod ops;
pub mod optim;
pub mod params;
pub mod rng;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use matrix::Matrix;
pub use optim::{Optimizer, OptimizerKind};
pub use params::{LayerId, LinearParams, ParamStore};
pub use rng::RngState;
