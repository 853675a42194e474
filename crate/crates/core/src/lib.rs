//! Traveling waves of nonlinear Schrödinger equations with a nonzero
//! condition at infinity: functionals, vortex-ring test fields, constrained
//! minimization on the Pohozaev set and regularization.

pub mod ansatz;
pub mod config;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod nonlinearity;
pub mod regularize;
pub mod spectral;
pub mod variational;
pub mod verify;

pub use error::{Error, Result};
pub use functionals::{FunctionalReport, Physics};
pub use grid::{ComplexField, DilationSpec, Grid};
pub use nonlinearity::{CutoffPhi, NonlinearityModel};
