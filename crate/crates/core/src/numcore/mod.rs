//! Dense matrices, softmax and normalization primitives, Adam, and
//! finite-difference gradient checking.
//!
//! All training math is `f64`. Operations are pure and sequential so that
//! results are bit-reproducible.

mod adam;
mod grad;
mod gradcheck;
mod matrix;
mod ops;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use grad::{GradBundle, ParamId};
pub use gradcheck::finite_diff_check;
pub use matrix::{dot, squared_distance, Matrix};
pub use ops::{l2_normalize_rows, row_norm, row_softmax, NORM_FLOOR};
pub(crate) use ops::softmax_in_place;
