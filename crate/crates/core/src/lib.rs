//! Strictly translation-equivariant networks over circular tensors, and
//! restorers built on them.
//!
//! A restorer estimates the translation (or, through log-polar resampling,
//! the rotation) of an input from the argmax of an equivariant network's
//! output, then undoes it so that any downstream classifier sees the
//! canonical pose.

pub mod constructive;
pub mod error;
pub mod io;
pub mod net;
pub mod par;
pub mod restore;
pub mod tensor;
pub mod training;
mod wire;

pub use error::{Error, Result};
