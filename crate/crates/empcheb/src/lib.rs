//! Standard-library companion to `empcheb-core`: Monte Carlo certification,
//! sample ingestion, output records and the `empcheb` command line.

pub mod cli;
pub mod ingest;
pub mod montecarlo;
pub mod output;

pub use empcheb_core as core;
