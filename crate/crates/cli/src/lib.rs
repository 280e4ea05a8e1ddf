//! Command-line driver: configuration, commands and file formats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod report;
pub mod run;
pub mod vtk;

pub use config::{parse_config, serialize_config, Command, RunConfig};
pub use run::{run, Artifacts};
