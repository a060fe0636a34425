//! Command-line pipeline around `metaselect-core`: configuration, the work
//! directory manifest, the stages, and serving.

pub mod config;
pub mod error;
pub mod infer;
pub mod manifest;
pub mod stages;
