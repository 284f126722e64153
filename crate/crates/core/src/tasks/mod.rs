//! Experiment harnesses: datasets, training loops, metrics, persistence
//! and timing.

pub mod bench;
pub mod config;
pub mod csv;
pub mod format;
pub mod manifest;
pub mod shapes;
pub mod spins;
pub mod svg;

pub use config::{LossKind, Task, TrainConfig};
pub use csv::CsvTable;
pub use manifest::RunManifest;
