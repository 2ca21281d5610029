//! Configuration, drivers and output writers behind the `helmlayer` binary.

pub mod config;
pub mod report;
pub mod run;
