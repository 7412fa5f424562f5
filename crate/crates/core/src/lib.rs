//! Exact fidelity analysis of qudit Reed-Solomon codes sent over several
//! lossy paths of different length, with quantum memories holding early
//! arrivals.

pub mod analytic;
pub mod channel;
pub mod cli;
pub mod codes;
pub mod config;
pub mod error;
pub mod modp;
pub mod oracle;
pub mod planner;
pub mod qudit;
pub mod rational;

pub use error::{Error, Result};
