//! Support library for the `jsp` binary: config files and evaluation
//! reports. The binary's subcommands live in `main.rs`.

pub mod cfgfile;
pub mod report;
