//! Scenario files, presets, the task runner, rendering and output files.

pub mod persist;
pub mod presets;
pub mod render;
pub mod runner;
pub mod scenario;
pub mod verify;
