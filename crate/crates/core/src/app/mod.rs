//! Operator surface: command line and HTTP service.

pub mod cli;
pub mod http;
