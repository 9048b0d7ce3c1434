//! Kinematic three-link swimmers, their connection fields, and a small PPO
//! stack for learning residual gaits on top of a geometric baseline.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod error;
pub mod export;
pub mod field;
pub mod fsio;
pub mod geometry;
pub mod rl;
pub mod swimmer;

pub use error::{Error, Result};
