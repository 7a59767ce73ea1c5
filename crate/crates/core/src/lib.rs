//! Stabilized Nitsche cut finite element method for the Oseen problem in 2D.
//!
//! Domains are given implicitly by a level set on a structured background
//! triangulation. Equal-order `P1/P1` and `P2/P2` velocity-pressure pairs are
//! stabilized with continuous interior penalties and ghost penalties, and the
//! Dirichlet condition on the embedded boundary is imposed weakly.

pub mod error;
pub mod forms;
pub mod geometry;
pub mod mesh;
pub mod navier_stokes;
pub mod quadrature;
pub mod solver;
pub mod spaces;
pub mod sparse;
pub mod verification;

pub use error::{CutFemError, Result};
