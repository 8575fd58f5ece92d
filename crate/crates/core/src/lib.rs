pub mod baselines;
pub mod basis;
pub mod bootstrap;
pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod pife;
pub mod rng;
pub mod simulation;
pub mod stats;
