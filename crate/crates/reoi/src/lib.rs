//! Dataset, model and region formats, run configuration, reports and the
//! `reoi` command line on top of `reoi-core`.

pub mod cli;
pub mod config;
pub mod harness;
pub mod io;
pub mod report;
