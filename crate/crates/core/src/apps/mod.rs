//! Applications: the 1-D convexification demo, erfc-loss classification and
//! noisy-network regression.

pub mod classify;
pub mod dataset;
pub mod demo;
pub mod nnet;

pub use dataset::Dataset;
