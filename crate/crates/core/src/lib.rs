//! Computational homogenization of a suspension of rigid magnetizable
//! particles in Stokes flow.
//!
//! The crate solves the three families of periodic unit-cell problems
//! (scalar potential correctors, viscous correctors, magnetic stress
//! correctors), assembles the effective permeability, viscosity and
//! magneto-viscous coupling tensors, solves the homogenized macro-scale
//! system, and verifies the two-scale corrector results against direct
//! fine-scale solves.

pub mod cell;
pub mod dns;
pub mod error;
pub mod fem;
pub mod macroscale;
pub mod material;
pub mod mesh;

pub use error::HomogError;
