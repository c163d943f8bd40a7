//! File formats, synthetic data and subcommands around `boxfuse-core`.
//!
//! Ground truth and detections use COCO JSON. Every subcommand of the
//! `boxfuse` binary is a function in [`commands`], so tests can drive the same
//! code paths without spawning a process.

pub mod coco;
pub mod commands;
pub mod nms;
pub mod profile;
pub mod report;
pub mod split;
pub mod synth;
