//! Quasi-optimal and pressure-robust finite element discretization of the
//! stationary Stokes equations with the unbalanced `P_ℓ / P_{ℓ-2}` pair.
//!
//! The load is tested with a divergence-preserving smoothing operator
//! `E_h = I + R_h`, where `R_h` solves local Scott–Vogelius problems on the
//! barycentric refinement of every cell, and the Dirichlet form is replaced
//! by a symmetric, coercive augmented form penalizing `R_h`.

// dense index loops mirror the element formulas
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod assembly;
pub mod divfix;
pub mod error;
pub mod experiments;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod spaces;
pub mod sparse;

pub use assembly::QuadratureLayout;
pub use error::{Result, StokesError};
pub use experiments::{Discretization, ErrorReport, ErrorRow, ExperimentName, ExperimentSpec, LevelCache};
pub use mesh::{build_crisscross, build_diagonal, Mesh, MeshFamily, Point};
pub use solver::{SolverKind, SolverOptions};
