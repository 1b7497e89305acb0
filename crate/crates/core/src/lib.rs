//! Mean/variance analysis of liquidity-provider payoffs in automated market
//! makers: CFMM analytics, an HJB-optimal oracle-driven pricing rule and a
//! Monte Carlo market simulator.

pub mod cfmm;
pub mod cli;
pub mod demand;
pub mod error;
pub mod harness;
pub mod hjb;
pub mod sim;
pub mod strategies;
pub mod units;

pub use error::{Error, Result};
