//! Command line and HTTP/WebSocket surface over the `mrlfd` library.

pub mod cli;
pub mod config;
pub mod pipeline;
pub mod server;
