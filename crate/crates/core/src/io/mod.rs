//! Artifact formats: binary checkpoints, CSV streams, SVG plots and run
//! manifests.

pub mod checkpoint;
pub mod csv;
pub mod manifest;
pub mod svg;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, policy_from_bytes, save_checkpoint, CheckpointError};
pub use csv::{CsvCell, CsvWriter};
pub use manifest::Manifest;
