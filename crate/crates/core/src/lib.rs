//! Multi-agent colony-forming-unit quality control.

pub mod agents;
pub mod classes;
pub mod config;
pub mod error;
pub mod metrics;
pub mod orchestrator;
pub mod raster;
pub mod registry;
pub mod store;
pub mod synthgen;
pub mod vision;

pub use classes::{BoxClass, ClassCounts, ColonyClass};
pub use error::{Error, ErrorCode, Result};
pub use raster::PlateImage;
