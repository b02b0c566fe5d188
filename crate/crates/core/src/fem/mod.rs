//! Finite-element layer: sparse storage, Q1 elements, constraint
//! elimination, iterative solvers, and the scalar / Stokes assemblies.

pub mod dofmap;
pub mod fields;
pub mod quadrature;
pub mod scalar;
pub mod solver;
pub mod sparse;
pub mod stokes;

pub use dofmap::{reduce_bilinear, Reduction, ReductionBuilder};
pub use fields::{ScalarField, VectorField};
pub use sparse::SparseMatrix;
