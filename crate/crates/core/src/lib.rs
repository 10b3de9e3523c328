//! Ensemble simulation of the incompressible Navier-Stokes equations with a
//! shared-coefficient BDF2 scheme, plus a POD reduced-order model of the same
//! ensemble method.

pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod pod;
pub mod problem;
pub mod rom;

pub use error::{Error, Result};
pub use fem::{Discretization, TaylorHoodSpace};
pub use mesh::Mesh;
