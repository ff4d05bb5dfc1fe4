pub mod cli;
pub mod config;
pub mod energy;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod loops;
pub mod mcmc;
pub mod oracle;
pub mod potential;
pub mod sampling;

pub use error::{Error, Result};
