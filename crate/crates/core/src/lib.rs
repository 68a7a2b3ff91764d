//! Finite element simulator for magnetization dynamics.
//!
//! The crate integrates the Landau-Lifshitz-Gilbert equation with
//! lowest-order finite elements in space and an implicit-explicit midpoint
//! rule in time: the stiff exchange field is treated by the implicit
//! midpoint rule while lower-order field contributions (stray field,
//! uniaxial anisotropy, spin-transfer torque) can be extrapolated
//! explicitly with a two-step Adams-Bashforth formula, which keeps the
//! per-step nonlinear solve cheap without losing second-order accuracy.
//! The stray field is computed with a hybrid FEM-BEM splitting.
//!
//! The `llg` binary drives the bundled experiments; see the crate README.

pub mod config;
pub mod contributions;
pub mod demag;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod integrator;
pub mod io;
pub mod linsolve;
pub mod mesh;

pub use error::{Error, Result};

pub use nalgebra;
