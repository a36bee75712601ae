//! Writes the three-frame replay clip used by the integration tests.
//!
//! One pothole sits in the middle of the view while the ground plane behind it
//! steps from 6.0 m to 4.0 m to 3.0 m. Depth is raw sensor geometry with a
//! 15 mm baseline, so the clip also exercises alignment; the box stays far
//! from the edge where the shift leaves holes, so every sample reads the
//! plane value.
//!
//! Usage: `cargo run --example make_fixture -- <out_dir>`

use std::fs;
use std::path::PathBuf;

use groundsense::dataset::{self, FrameEntry, ReplayManifest};
use groundsense::pipeline::synthetic_calibration;
use groundsense::{BBox, Category, DepthFrame, Detection};
use image::{Rgb, RgbImage};

const SIZE: (u32, u32) = (640, 480);
const PLANES: [u16; 3] = [6000, 4000, 3000];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("crates/core/tests/fixtures/clip"));
    fs::create_dir_all(out.join("color"))?;
    fs::create_dir_all(out.join("depth"))?;

    let calib = synthetic_calibration(SIZE);
    fs::write(out.join("calib.txt"), dataset::format_calibration(&calib))?;

    let mut frames = Vec::new();
    let mut records = String::from("# frame category confidence x1 y1 x2 y2\n");
    for (i, raw) in PLANES.iter().enumerate() {
        let id = i as u64 + 1;
        let color = PathBuf::from(format!("color/{id:06}.png"));
        let depth = PathBuf::from(format!("depth/{id:06}.png"));
        RgbImage::from_pixel(SIZE.0, SIZE.1, Rgb([96, 96, 96])).save(out.join(&color))?;
        let frame = DepthFrame::filled(SIZE.0, SIZE.1, *raw, calib.depth_scale, id);
        dataset::save_depth_frame(&frame, &out.join(&depth))?;

        // the box grows as the pothole gets closer
        let half = 40.0 + 20.0 * i as f64;
        let det = Detection {
            frame_id: id,
            category: Category::Pothole,
            confidence: 0.91,
            bbox: BBox::new(320.0 - half, 300.0 - half / 2.0, 320.0 + half, 300.0 + half / 2.0),
        };
        records.push_str(&det.to_record());
        records.push('\n');
        frames.push(FrameEntry {
            id,
            color,
            depth,
            timestamp: i as f64 / 30.0,
        });
    }
    fs::write(out.join("detections.txt"), records)?;

    let manifest = ReplayManifest {
        calibration: "calib.txt".into(),
        detections: Some("detections.txt".into()),
        imu: None,
        aligned: false,
        frames,
        base_dir: PathBuf::new(),
    };
    fs::write(out.join("manifest.toml"), manifest.to_toml())?;
    println!("wrote fixture clip to {}", out.display());
    Ok(())
}
