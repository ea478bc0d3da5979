//! HTTP API and command line for the colony counting QC pipeline.

pub mod api;
pub mod cli;

pub use api::{router, ApiError, ApiErrorBody, AppState};
