//! Attaches a distance to each detection from the aligned depth frame.
//!
//! Depth is sampled at the box center plus random points in a disc around
//! it. Missing returns are dropped, the rest sorted, and the central
//! `trim_keep` fraction averaged.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{parse_record, BBox, Detection};
use crate::error::{Error, Result};
use crate::geometry::DepthFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub n_samples: usize,
    /// Disc radius as a fraction of `min(box width, box height)`.
    pub radius_frac: f64,
    /// Central fraction of the sorted samples that is averaged.
    pub trim_keep: f64,
    pub rng_seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            n_samples: 24,
            radius_frac: 0.15,
            trim_keep: 0.5,
            rng_seed: 0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        if !(self.radius_frac > 0.0 && self.radius_frac <= 0.5) {
            return Err(Error::Config(format!("radius_frac {} outside (0, 0.5]", self.radius_frac)));
        }
        if !(self.trim_keep > 0.0 && self.trim_keep <= 1.0) {
            return Err(Error::Config(format!("trim_keep {} outside (0, 1]", self.trim_keep)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedDetection {
    pub detection: Detection,
    pub distance_m: Option<f64>,
    pub valid_samples: usize,
}

impl FusedDetection {
    /// `frame_id category_id confidence x1 y1 x2 y2 distance_m valid_samples`,
    /// with `-` for a missing distance.
    pub fn to_record(&self) -> String {
        let distance = match self.distance_m {
            Some(d) => d.to_string(),
            None => "-".to_string(),
        };
        format!("{} {} {}", self.detection.to_record(), distance, self.valid_samples)
    }

    pub fn parse_record(text: &str, source_name: &str, line: usize) -> Result<Self> {
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 9 {
            return Err(Error::parse(
                source_name,
                line,
                format!("expected 9 fields, found {}", fields.len()),
            ));
        }
        let detection = parse_record(&fields[..7].join(" "), source_name, line)?;
        let distance_m = match fields[7] {
            "-" => None,
            s => Some(
                s.parse::<f64>()
                    .ok()
                    .filter(|d| *d > 0.0 && d.is_finite())
                    .ok_or_else(|| Error::parse(source_name, line, format!("invalid distance `{s}`")))?,
            ),
        };
        let valid_samples = fields[8]
            .parse()
            .map_err(|_| Error::parse(source_name, line, format!("invalid sample count `{}`", fields[8])))?;
        Ok(FusedDetection {
            detection,
            distance_m,
            valid_samples,
        })
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-detection seed from the stream seed, frame id and detection index.
pub fn detection_seed(stream_seed: u64, frame_id: u64, index: usize) -> u64 {
    let z = splitmix64(stream_seed ^ splitmix64(frame_id));
    splitmix64(z ^ splitmix64(index as u64 ^ 0xD1B5_4A32_D192_ED03))
}

/// Integer pixel span `[lo, hi]` covered by `[a, b)` inside `[0, limit)`.
fn pixel_span(a: f64, b: f64, limit: u32) -> (u32, u32) {
    let max = f64::from(limit.saturating_sub(1));
    let lo = a.floor().clamp(0.0, max);
    let hi = (b.ceil() - 1.0).clamp(lo, max);
    (lo as u32, hi as u32)
}

/// Sampling pattern for one box: the integer center pixel first, then
/// `n_samples - 1` points drawn uniformly from the disc around the center,
/// clamped to the box and the frame. Seeded by `cfg.rng_seed` only.
pub fn sample_points(bbox: &BBox, cfg: &FusionConfig, frame_size: (u32, u32)) -> Vec<(u32, u32)> {
    let (ulo, uhi) = pixel_span(bbox.x1, bbox.x2, frame_size.0);
    let (vlo, vhi) = pixel_span(bbox.y1, bbox.y2, frame_size.1);
    let clamp_px = |x: f64, lo: u32, hi: u32| x.floor().clamp(f64::from(lo), f64::from(hi)) as u32;

    let (cx, cy) = bbox.center();
    let mut points = Vec::with_capacity(cfg.n_samples.max(1));
    points.push((clamp_px(cx, ulo, uhi), clamp_px(cy, vlo, vhi)));

    let radius = cfg.radius_frac * bbox.width().min(bbox.height());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    for _ in 1..cfg.n_samples {
        let r = radius * rng.random::<f64>().sqrt();
        let theta = TAU * rng.random::<f64>();
        let (x, y) = (cx + r * theta.cos(), cy + r * theta.sin());
        points.push((clamp_px(x, ulo, uhi), clamp_px(y, vlo, vhi)));
    }
    points
}

/// Trimmed-mean depth over the sampled pixels, plus how many samples had a
/// depth return.
pub fn robust_depth_with_count(depth: &DepthFrame, points: &[(u32, u32)], trim_keep: f64) -> (Option<f64>, usize) {
    let mut valid: Vec<u16> = points
        .iter()
        .filter(|&&(u, v)| u < depth.width && v < depth.height)
        .map(|&(u, v)| depth.raw(u, v))
        .filter(|&raw| raw != 0)
        .collect();
    let k = valid.len();
    if k == 0 {
        return (None, 0);
    }
    valid.sort_unstable();
    let drop = (k as f64 * (1.0 - trim_keep) / 2.0).floor() as usize;
    let kept = &valid[drop..k - drop];
    let sum: u64 = kept.iter().map(|&v| u64::from(v)).sum();
    let mean_raw = sum as f64 / kept.len() as f64;
    (Some(mean_raw * depth.depth_scale()), k)
}

/// Trimmed-mean depth in meters, `None` when no sample has a depth return.
pub fn robust_depth(depth: &DepthFrame, points: &[(u32, u32)], trim_keep: f64) -> Option<f64> {
    robust_depth_with_count(depth, points, trim_keep).0
}

/// Fuses one frame's detections with its aligned depth frame. Output order
/// follows input order.
pub fn fuse(detections: &[Detection], depth: &DepthFrame, cfg: &FusionConfig) -> Vec<FusedDetection> {
    detections
        .iter()
        .enumerate()
        .map(|(i, det)| {
            let det_cfg = FusionConfig {
                rng_seed: detection_seed(cfg.rng_seed, det.frame_id, i),
                ..*cfg
            };
            let points = sample_points(&det.bbox, &det_cfg, (depth.width, depth.height));
            let (distance_m, valid_samples) = robust_depth_with_count(depth, &points, cfg.trim_keep);
            FusedDetection {
                detection: det.clone(),
                distance_m,
                valid_samples,
            }
        })
        .collect()
}
