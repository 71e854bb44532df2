//! File formats, dataset generation, training glue and the sweep harness
//! behind the `nfwb` command-line tool.

pub mod cache;
pub mod config;
pub mod corr;
pub mod dataset;
pub mod exec;
pub mod formats;
pub mod harness;
pub mod training;
