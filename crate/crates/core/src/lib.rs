//! Dimensions of random graph-directed self-similar sets.
//!
//! The library models systems of graphs whose edges carry contracting similitudes,
//! drawn at random either once per construction level (1-variable) or independently
//! per node (∞-variable). It computes almost-sure dimensions by root-finding on the
//! growth rate of random banded matrix products, bounds the Assouad dimension through
//! joint spectral radii, and checks both against brute-force oracles and box counts.

pub mod assouad;
pub mod cli;
pub mod geometry;
pub mod infinite;
pub mod linalg;
pub mod pressure;
pub mod realization;
pub mod report;
pub mod sampler;
pub mod stopping;
pub mod system;
pub mod words;
