//! Performance prediction for modular optimization algorithms through
//! knowledge-graph link prediction.

pub mod benchgen;
pub mod ela;
pub mod embed;
pub mod error;
pub mod eval;
pub mod kg;
pub mod predict;
pub mod seed;

pub use error::{Error, Result};
