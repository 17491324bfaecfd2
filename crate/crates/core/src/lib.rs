pub mod autodiff;
pub mod config;
pub mod experiment;
pub mod graph;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod walk;
