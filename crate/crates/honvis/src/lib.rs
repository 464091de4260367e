//! Bundle persistence, the JSON API and the `honvis` command line.

pub mod bundle;
pub mod cli;
pub mod service;
pub mod views;
