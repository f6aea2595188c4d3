//! Test densities, Monte Carlo experiments and summary statistics.

pub mod demo;
pub mod densities;
pub mod experiment;
pub mod jet;
pub mod stats;
