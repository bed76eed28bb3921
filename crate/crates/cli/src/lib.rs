//! Experiment configuration, artifact I/O and subcommands for the
//! `helflow` binary.

pub mod artifacts;
pub mod commands;
pub mod config;
