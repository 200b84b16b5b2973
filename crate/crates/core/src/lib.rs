pub mod ensemble;
pub mod error;
pub mod forward;
pub mod linalg;
pub mod regularizer;
pub mod rng;
pub mod solver;
pub mod theory;
pub mod experiments;
