//! Community modulated recursive trees: generators, continuous-time
//! embeddings, limiting laws, estimators and a Monte Carlo harness.

pub mod embed;
pub mod estimate;
pub mod gen;
pub mod mc;
pub mod params;
pub mod rng;
pub mod stats;
pub mod theory;
pub mod tree;
