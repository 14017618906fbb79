//! File formats, output directories and the command-line front end for
//! `sparsepanel-core`.

pub mod cli;
pub mod config;
pub mod io;
pub mod output;

pub use sparsepanel_core as core;
