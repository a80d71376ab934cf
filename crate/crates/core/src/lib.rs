//! Graph-consistency mean teaching for unsupervised domain-adaptive
//! embedding learning.
//!
//! A source-pretrained encoder is adapted to an unlabeled target domain by
//! one or more student/teacher pairs. Students learn from k-means pseudo
//! labels, from the averaged teacher class predictions, and from a fused
//! teacher neighbourhood graph; teachers track students by EMA.

pub mod cluster;
pub mod error;
pub mod evalkit;
pub mod graphs;
pub mod losses;
pub mod model;
pub mod numcore;
pub mod numfmt;
pub mod rng;
pub mod synthdata;
pub mod trainer;

pub use error::{CheckpointError, Error, ParseError, Result};
pub use numcore::{GradBundle, Matrix, ParamId};
