//! Annotation harness: artifact store, model gateway and the command-line
//! pipeline built on `annorater-core`.

pub mod cli;
pub mod gateway;
pub mod store;
