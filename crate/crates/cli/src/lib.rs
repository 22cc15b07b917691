//! Configuration, campaign runners and verification suites for the `mshe`
//! command-line tool.

pub mod campaign;
pub mod config;
pub mod verify;
