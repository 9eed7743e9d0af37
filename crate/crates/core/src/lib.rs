pub mod collision;
pub mod config;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod measures;
pub mod quad;
pub mod runner;
pub mod transport;
pub mod wall;

pub use error::{Error, Result};
