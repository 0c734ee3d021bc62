//! Command-line front end for the urnwalk simulators.

pub mod config;
pub mod error;
pub mod manifest;
pub mod runner;
pub mod validate;
