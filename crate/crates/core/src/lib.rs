//! Discovering governing equations of dynamical systems from video.
//!
//! The pipeline: [`dynamics`] generates ground truth, [`render`] turns it into
//! frames, [`extract`] recovers low-dimensional variables from pixels,
//! [`regress`] fits sparse symbolic laws, [`evaluate`] scores them, and
//! [`planner`] iterates the whole loop.

pub mod error;
pub mod dynamics;
pub mod render;
pub mod extract;
pub mod regress;
pub mod evaluate;
pub mod planner;

pub use error::{Error, Result};
