//! Discrete simulation and verification of the constrained Willmore
//! (Helfrich) gradient flow on closed triangle surfaces.

pub mod analytic;
pub mod diagnostics;
pub mod energy;
pub mod flow;
pub mod geometry;
pub mod mesh;
pub mod oracle;
pub mod remesh;
pub mod serde_ext;
