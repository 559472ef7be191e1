//! Simulation and verification tools for totally asymmetric zero-range
//! processes and q-TASEP at equilibrium.

pub mod error;
pub mod experiments;
pub mod fields;
pub mod generator;
pub mod lattice;
pub mod measure;
pub mod rates;

pub use error::{Error, Result};
