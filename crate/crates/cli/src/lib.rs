//! Configuration, output formats and experiment suites behind the `rwpe` binary.

pub mod config;
pub mod output;
pub mod suite;
