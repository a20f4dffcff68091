//! HTTP tutoring service, backend adapters and the `qfb` command line over
//! the `qfeedback` library.

pub mod adapters;
pub mod backends;
pub mod cli;
pub mod config;
pub mod server;
pub mod tutor;
