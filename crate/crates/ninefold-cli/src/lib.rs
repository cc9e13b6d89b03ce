//! Orchestration layer for the ninefold evaluation harness: run
//! configuration, file formats, service adapters, the pipeline, cost
//! accounting, and report rendering. The `ninefold` binary is a thin clap
//! wrapper over this crate.

pub mod clients;
pub mod config;
pub mod formats;
pub mod ledger;
pub mod pipeline;
pub mod report;
