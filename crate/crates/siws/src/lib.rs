//! Configuration files, sampling, experiment runs, artifacts and the
//! command-line interface around `siws-core`.

pub mod cli;
pub mod config;
pub mod csv_io;
pub mod experiments;
pub mod report;
pub mod sampling;
pub mod synth;
