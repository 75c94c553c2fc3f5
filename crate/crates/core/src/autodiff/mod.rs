//! Dense tensors and a reverse-mode differentiation tape.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error, ElementCheck, GradCheckReport, RELATIVE_ERROR_FLOOR};
pub use params::{Bound, GradientMap, ParamId, ParamSet};
pub use tape::{sigmoid, CustomBackward, Tape, Unary, Var};
pub use tensor::Tensor;
