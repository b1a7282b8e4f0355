//! Configuration, diagnostics CSV, binary snapshots and run manifests.

pub mod config;
pub mod csv;
pub mod manifest;
pub mod snapshot;
