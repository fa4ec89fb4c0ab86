pub mod error;
pub mod gains;
pub mod config;
pub mod continuation;
pub mod mde;
pub mod orbit;
pub mod report;
pub mod stochastic;
pub mod syncstat;
pub mod model;

pub use error::{Error, Result};
