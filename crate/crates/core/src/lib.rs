//! Finite-element laboratory for divergence-form transmission problems on
//! layered domains with piecewise-constant coefficients.

pub mod diagnostics;
pub mod geometry;
pub mod lab;
pub mod mesh;
pub mod solver;
