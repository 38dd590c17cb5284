//! Command-line harness and HTTP review API for the IFAC toolkit.

pub mod commands;
pub mod plot;
pub mod server;
