//! Conductivity perturbations that are invisible to point-electrode
//! impedance measurements on the unit disk.

pub mod basis;
pub mod cem;
pub mod config;
pub mod error;
pub mod export;
pub mod expr;
pub mod fem;
pub mod mesh;
mod par;
pub mod potentials;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
