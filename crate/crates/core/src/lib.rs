//! Ground-obstacle proximity pipeline for e-scooters.
//!
//! Per-frame object detections are fused with aligned depth imagery to
//! estimate obstacle distance, and a warning is raised once an obstacle is
//! 4 m away or closer. Alongside the frame pipeline the crate turns
//! accelerometer logs into a smoothed vertical vibration signal and scores
//! detections with COCO-style mAP50 / mAP50-95 reports.
//!
//! Modules, bottom up:
//!
//! - [`imu`]: gravity low-pass, linear vertical acceleration, Kalman smoothing
//! - [`geometry`]: pinhole projection and depth-to-color alignment
//! - [`detection`]: categories, boxes, NMS postprocessing, detection sources
//! - [`fusion`]: center-disc depth sampling and trimmed-mean distance
//! - [`alert`]: the 4 m warning rule with optional hysteresis
//! - [`eval`]: matching, AP and per-category report rows
//! - [`dataset`]: file formats and the seeded split
//! - [`pipeline`]: replay, bench, IMU analysis and overlay rendering

pub mod alert;
pub mod dataset;
pub mod detection;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod imu;
pub mod pipeline;
mod render;

pub use alert::{AlertConfig, AlertTracker, WarningEvent};
pub use detection::{BBox, Category, Detection, DetectionSource, ReplaySource, StreamSource};
pub use error::{Error, Result};
pub use eval::{EvalParams, EvalReport, GroundTruthBox};
pub use fusion::{FusedDetection, FusionConfig};
pub use geometry::{DepthFrame, Extrinsics, Intrinsics};
pub use imu::{AccelSample, ImuParams, ImuProcessor, VibrationPoint};
