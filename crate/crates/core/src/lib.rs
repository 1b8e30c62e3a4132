pub mod bootstrap;
pub mod config;
pub mod error;
pub mod market_model;
pub mod mortality;
pub mod objective;
pub mod pide;
pub mod scenario;
pub mod simulator;

pub use error::{Error, Result};
pub use scenario::{Kappa, Scenario};
