//! Regularized rhomboidal four-body problem with symmetric masses.
//!
//! The crate covers the two- and four-degree-of-freedom regularized
//! Hamiltonians, an adaptive RKF45 integrator with event location, periodic
//! orbit determination by trigonometric fitting and by shooting, Floquet
//! stability through the quarter-period K-matrix, and Poincaré sections of the
//! planar problem.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod integrate;
pub mod model;
pub mod orbit;
pub mod poincare;
pub mod stability;

pub use error::{Error, Result};
pub use model::{MassRatio, Params, Reg2DFState, Reg4DFState};
