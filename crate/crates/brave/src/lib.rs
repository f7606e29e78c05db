//! File formats, experiment runner and command line for `brave-core`.

pub mod cli;
pub mod experiment;
pub mod formats;
pub mod output;
