pub mod error;
pub mod geometry;

pub use error::{Error, Result};
pub mod kinematics;
pub mod dica;
pub mod enhanced;
pub mod rdica;
pub mod baselines;
pub mod sim;
pub mod cli;
