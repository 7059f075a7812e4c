//! Command-line driver and HTTP session service.

pub mod args;
pub mod chat;
pub mod commands;
pub mod http;
