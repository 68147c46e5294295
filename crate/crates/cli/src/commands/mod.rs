pub mod classify;
pub mod control;
pub mod demo;
pub mod nnet;
pub mod synth;
