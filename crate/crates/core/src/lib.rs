//! Simulation toolkit for topological kink defects in laser-cooled Coulomb crystals
//! held in a linear RF trap.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod imaging;
pub mod model;
pub mod modes;
pub mod pnscan;
pub mod potential;
pub mod quenchlab;
pub mod statics;

pub use error::{Error, Result};
