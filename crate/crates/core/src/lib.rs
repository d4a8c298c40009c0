//! Finite-volume Euler solver with MUSCL reconstruction and a linearized
//! matrix stability analyzer for captured planar normal shocks.

pub mod config;
pub mod eigen;
pub mod error;
pub mod euler;
pub mod experiments;
pub mod grid;
pub mod muscl;
pub mod riemann;
pub mod shock;
pub mod solver;
pub mod stability;

pub use error::{Error, Result};
