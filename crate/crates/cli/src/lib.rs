//! Command implementations and output plumbing for the `favard` binary.

pub mod commands;
pub mod output;
