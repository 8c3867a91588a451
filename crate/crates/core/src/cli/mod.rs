//! Scenario configuration and commands.

pub mod commands;
pub mod config;
pub mod output;
