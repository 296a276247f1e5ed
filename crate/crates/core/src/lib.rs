//! Spectral geodesics, Jacobi fields and conjugate points on the group of
//! area-preserving diffeomorphisms of the flat torus `T^2 = [0, 2π)^2`,
//! equipped with the right-invariant `H^1` metric.

pub mod basis;
pub mod cpn;
pub mod error;
pub mod exec;
pub mod fields;
pub mod flow;
pub mod geodesic;
pub mod jacobi;
pub mod lie;
mod nufft;
pub mod report;
pub mod selftest;
pub mod spectral;

pub use error::{Error, Result};
pub use exec::Execution;
