//! Numerical toolkit for pseudo-holomorphic discs attached to real tori in
//! coordinate models on the bidisc.

pub mod acs;
pub mod discsolve;
pub mod error;
pub mod gluing;
pub mod grid;
pub mod phase;
pub mod singint;
pub mod vekua;

pub use error::{Error, Result};
pub use grid::{dbar, dz, make_polar_grid, sample, CircleFunction, DiscGrid, GridFunction};
