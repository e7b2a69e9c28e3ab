//! Images, run configuration and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod pnm;
