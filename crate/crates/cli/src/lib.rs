//! Command-line harness around `tod-core`: dataset generation, PCA and PLS
//! exports, segmentation, predictive control reports.

pub mod commands;
pub mod config;
pub mod manifest;
