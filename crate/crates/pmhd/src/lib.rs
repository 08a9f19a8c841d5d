//! Pseudo-spectral laboratory for the stochastically forced 3-D MHD system on
//! the torus: Littlewood-Paley calculus, Gaussian drivers, Wick products,
//! renormalization constants, the perturbative tree and the paracontrolled
//! fixed point, with a direct solver as oracle.

pub mod besov;
pub mod config;
pub mod direct;
pub mod error;
pub mod experiments;
pub mod exponents;
pub mod inequalities;
pub mod lattice;
pub mod mhd;
pub mod operators;
pub mod paracontrolled;
pub mod renorm;
pub mod snapshot;
pub mod spectral;
pub mod noise;
pub mod stats;
pub mod subcrit;
pub mod tree;
pub mod wick;
