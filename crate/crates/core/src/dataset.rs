//! On-disk formats: annotations, depth frames, IMU logs, calibration, replay
//! manifests and the category map, plus the seeded train/val/test split.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageReader, Luma};
use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{BBox, Category};
use crate::error::{Error, Result};
use crate::eval::GroundTruthBox;
use crate::geometry::{DepthFrame, Extrinsics, Intrinsics};
use crate::imu::AccelSample;

pub const DEFAULT_DEPTH_SCALE: f64 = 0.001;

// ---------------------------------------------------------------- annotations

/// Pixel size of each annotated image.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageSizes {
    Uniform(u32, u32),
    PerImage(BTreeMap<u64, (u32, u32)>),
}

impl ImageSizes {
    pub fn get(&self, image_id: u64) -> Option<(u32, u32)> {
        match self {
            ImageSizes::Uniform(w, h) => Some((*w, *h)),
            ImageSizes::PerImage(map) => map.get(&image_id).copied(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationSet {
    /// Every annotated image, including those without boxes.
    pub image_ids: Vec<u64>,
    pub boxes: Vec<GroundTruthBox>,
}

/// Parses one normalized-center annotation file
/// (`category_id xc yc w h` per line, all in [0, 1]).
pub fn parse_annotations(text: &str, image_id: u64, size: (u32, u32), file: &str) -> Result<Vec<GroundTruthBox>> {
    let (iw, ih) = (f64::from(size.0), f64::from(size.1));
    let mut boxes = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 5 {
            return Err(Error::parse(file, line_no, format!("expected 5 fields, found {}", fields.len())));
        }
        let category_id: i64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(file, line_no, format!("invalid category id `{}`", fields[0])))?;
        let category = Category::from_id(category_id)?;
        let mut v = [0.0f64; 4];
        for (slot, s) in v.iter_mut().zip(&fields[1..]) {
            let x: f64 = s
                .parse()
                .map_err(|_| Error::parse(file, line_no, format!("invalid coordinate `{s}`")))?;
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Range {
                    file: file.to_string(),
                    line: line_no,
                    value: x,
                });
            }
            *slot = x;
        }
        let [xc, yc, w, h] = v;
        let bbox = BBox::new((xc - w / 2.0) * iw, (yc - h / 2.0) * ih, (xc + w / 2.0) * iw, (yc + h / 2.0) * ih)
            .clamp_to(size.0, size.1);
        if !bbox.is_valid() {
            return Err(Error::parse(file, line_no, "box has zero area"));
        }
        boxes.push(GroundTruthBox { image_id, bbox, category });
    }
    Ok(boxes)
}

/// Serializes boxes of one image back into the normalized-center format.
pub fn format_annotations(boxes: &[GroundTruthBox], size: (u32, u32)) -> String {
    let (iw, ih) = (f64::from(size.0), f64::from(size.1));
    let mut out = String::new();
    for b in boxes {
        let (xc, yc) = b.bbox.center();
        let _ = writeln!(
            out,
            "{} {:.6} {:.6} {:.6} {:.6}",
            b.category.id(),
            xc / iw,
            yc / ih,
            b.bbox.width() / iw,
            b.bbox.height() / ih
        );
    }
    out
}

/// Loads every `<image_id>.txt` file in `dir`. Stems must be integers; other
/// files are ignored.
pub fn load_annotations(dir: &Path, sizes: &ImageSizes) -> Result<AnnotationSet> {
    let mut files: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let image_id: u64 = stem.parse().map_err(|_| Error::Format {
            path: path.clone(),
            message: "annotation file names must be numeric image ids".into(),
        })?;
        files.push((image_id, path));
    }
    files.sort();

    let mut set = AnnotationSet::default();
    for (image_id, path) in files {
        let size = sizes.get(image_id).ok_or_else(|| Error::Format {
            path: path.clone(),
            message: format!("no image size known for image {image_id}"),
        })?;
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        set.boxes
            .extend(parse_annotations(&text, image_id, size, &path.display().to_string())?);
        set.image_ids.push(image_id);
    }
    Ok(set)
}

// ---------------------------------------------------------------- depth

/// Reads a 16-bit single-channel image. Raw values are kept bit-exact.
pub fn load_depth_frame(path: &Path, depth_scale: f64, frame_id: u64) -> Result<DepthFrame> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let DynamicImage::ImageLuma16(buf) = img else {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("depth must be 16-bit single channel, found {:?}", img.color()),
        });
    };
    let (w, h) = buf.dimensions();
    DepthFrame::new(w, h, buf.into_raw(), depth_scale, frame_id)
}

/// Writes a depth frame as a 16-bit grayscale PNG.
pub fn save_depth_frame(frame: &DepthFrame, path: &Path) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(frame.width, frame.height, frame.values.clone()).expect("raster size checked at construction");
    buf.save(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

// ---------------------------------------------------------------- IMU

/// Reads a `t,ax,ay,az` CSV log with a header row.
pub fn load_imu_log(path: &Path) -> Result<Vec<AccelSample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_imu_log(file, &path.display().to_string())
}

pub fn read_imu_log(reader: impl std::io::Read, source_name: &str) -> Result<Vec<AccelSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut samples: Vec<AccelSample> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(source_name, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 4 {
            return Err(Error::parse(source_name, line, format!("expected 4 columns, found {}", record.len())));
        }
        let mut v = [0.0f64; 4];
        for (slot, field) in v.iter_mut().zip(record.iter()) {
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(source_name, line, format!("invalid number `{field}`")))?;
        }
        let sample = AccelSample::new(v[0], v[1], v[2], v[3]);
        if let Some(prev) = samples.last() {
            if sample.t <= prev.t {
                return Err(Error::Order {
                    source_name: source_name.to_string(),
                    line,
                    t: sample.t,
                });
            }
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn write_imu_log(samples: &[AccelSample], path: &Path) -> Result<()> {
    let mut out = String::from("t,ax,ay,az\n");
    for s in samples {
        let _ = writeln!(out, "{},{},{},{}", s.t, s.ax, s.ay, s.az);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- calibration

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub depth: Intrinsics,
    pub color: Intrinsics,
    pub depth_to_color: Extrinsics,
    pub depth_scale: f64,
}

impl Calibration {
    /// Same intrinsics for both streams and an identity transform.
    pub fn identity(intr: Intrinsics) -> Self {
        Calibration {
            depth: intr,
            color: intr,
            depth_to_color: Extrinsics::identity(),
            depth_scale: DEFAULT_DEPTH_SCALE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.depth.validate()?;
        self.color.validate()?;
        self.depth_to_color.validate()?;
        if !(self.depth_scale > 0.0 && self.depth_scale.is_finite()) {
            return Err(Error::Calibration(format!("depth_scale {} must be positive", self.depth_scale)));
        }
        Ok(())
    }
}

/// Parses the `key = value` calibration format:
///
/// ```text
/// depth.width = 640        # likewise height, fx, fy, cx, cy
/// depth.distortion = 0 0 0 0 0   # optional, must be all zero
/// color.width = 640
/// ...
/// extrinsics = r11 r12 r13 r21 r22 r23 r31 r32 r33 tx ty tz
/// depth_scale = 0.001      # optional
/// ```
pub fn parse_calibration(text: &str, source_name: &str) -> Result<Calibration> {
    let mut values: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(source_name, idx + 1, "expected `key = value`"))?;
        values.insert(key.trim().to_string(), (idx + 1, value.trim().to_string()));
    }

    let numbers = |key: &str| -> Result<Option<Vec<f64>>> {
        let Some((line, value)) = values.get(key) else {
            return Ok(None);
        };
        value
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(source_name, *line, format!("invalid number `{s}` for {key}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    };
    let scalar = |key: &str| -> Result<f64> {
        match numbers(key)? {
            Some(v) if v.len() == 1 => Ok(v[0]),
            Some(_) => Err(Error::Calibration(format!("{key} expects a single value"))),
            None => Err(Error::Calibration(format!("missing key {key}"))),
        }
    };
    let dimension = |key: &str| -> Result<u32> {
        let v = scalar(key)?;
        if v.fract() != 0.0 || !(1.0..=f64::from(u32::MAX)).contains(&v) {
            return Err(Error::Calibration(format!("{key} must be a positive integer")));
        }
        Ok(v as u32)
    };
    let intrinsics = |stream: &str| -> Result<Intrinsics> {
        if let Some(dist) = numbers(&format!("{stream}.distortion"))? {
            if dist.iter().any(|&c| c != 0.0) {
                return Err(Error::Calibration(format!(
                    "{stream}.distortion: only zero lens distortion is supported"
                )));
            }
        }
        let intr = Intrinsics {
            width: dimension(&format!("{stream}.width"))?,
            height: dimension(&format!("{stream}.height"))?,
            fx: scalar(&format!("{stream}.fx"))?,
            fy: scalar(&format!("{stream}.fy"))?,
            cx: scalar(&format!("{stream}.cx"))?,
            cy: scalar(&format!("{stream}.cy"))?,
        };
        intr.validate()?;
        Ok(intr)
    };

    let depth = intrinsics("depth")?;
    let color = intrinsics("color")?;
    let ext = numbers("extrinsics")?.ok_or_else(|| Error::Calibration("missing key extrinsics".into()))?;
    if ext.len() != 12 {
        return Err(Error::Calibration(format!("extrinsics expects 12 numbers, found {}", ext.len())));
    }
    let depth_to_color = Extrinsics {
        rotation: Matrix3::from_row_slice(&ext[..9]),
        translation: Vector3::new(ext[9], ext[10], ext[11]),
    };
    let depth_scale = if values.contains_key("depth_scale") {
        scalar("depth_scale")?
    } else {
        DEFAULT_DEPTH_SCALE
    };
    let calib = Calibration {
        depth,
        color,
        depth_to_color,
        depth_scale,
    };
    calib.validate()?;
    Ok(calib)
}

pub fn format_calibration(calib: &Calibration) -> String {
    let mut out = String::new();
    for (name, intr) in [("depth", &calib.depth), ("color", &calib.color)] {
        let _ = writeln!(out, "{name}.width = {}", intr.width);
        let _ = writeln!(out, "{name}.height = {}", intr.height);
        let _ = writeln!(out, "{name}.fx = {}", intr.fx);
        let _ = writeln!(out, "{name}.fy = {}", intr.fy);
        let _ = writeln!(out, "{name}.cx = {}", intr.cx);
        let _ = writeln!(out, "{name}.cy = {}", intr.cy);
    }
    let r = &calib.depth_to_color.rotation;
    let t = &calib.depth_to_color.translation;
    let nums: Vec<String> = (0..3)
        .flat_map(|i| (0..3).map(move |j| r[(i, j)].to_string()))
        .chain(t.iter().map(|x| x.to_string()))
        .collect();
    let _ = writeln!(out, "extrinsics = {}", nums.join(" "));
    let _ = writeln!(out, "depth_scale = {}", calib.depth_scale);
    out
}

pub fn load_calibration(path: &Path) -> Result<Calibration> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_calibration(&text, &path.display().to_string())
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub id: u64,
    pub color: PathBuf,
    pub depth: PathBuf,
    pub timestamp: f64,
}

/// A recorded clip. Relative paths resolve against the manifest's directory.
///
/// ```toml
/// calibration = "calib.txt"
/// detections = "detections.txt"   # optional
/// imu = "imu.csv"                  # optional
/// aligned = false                  # true if depth is already in color geometry
///
/// [[frame]]
/// id = 1
/// color = "color/000001.png"
/// depth = "depth/000001.png"
/// timestamp = 0.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayManifest {
    pub calibration: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imu: Option<PathBuf>,
    #[serde(default)]
    pub aligned: bool,
    #[serde(rename = "frame", default)]
    pub frames: Vec<FrameEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ReplayManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest is always representable")
    }

    fn validate(&self, source: &Path) -> Result<()> {
        for pair in self.frames.windows(2) {
            if pair[1].id <= pair[0].id {
                return Err(Error::Format {
                    path: source.to_path_buf(),
                    message: format!("frame ids must increase ({} follows {})", pair[1].id, pair[0].id),
                });
            }
        }
        let mut referenced = vec![self.calibration.clone()];
        referenced.extend(self.detections.clone());
        referenced.extend(self.imu.clone());
        for f in &self.frames {
            referenced.push(f.color.clone());
            referenced.push(f.depth.clone());
        }
        for p in referenced {
            let full = self.resolve(&p);
            if !full.is_file() {
                return Err(Error::io(full, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")));
            }
        }
        Ok(())
    }
}

/// Loads a manifest and checks frame order and that every file exists.
pub fn load_manifest(path: &Path) -> Result<ReplayManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: ReplayManifest = toml::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest.validate(path)?;
    Ok(manifest)
}

// ---------------------------------------------------------------- category map

/// Validates a shared `id name` category map against the built-in ids.
pub fn load_category_map(path: &Path) -> Result<Vec<Category>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let mut seen = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, name) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| Error::parse(&source, idx + 1, "expected `id name`"))?;
        let id: i64 = id
            .parse()
            .map_err(|_| Error::parse(&source, idx + 1, format!("invalid id `{id}`")))?;
        let category = Category::from_id(id)?;
        if category.name() != name.trim() {
            return Err(Error::parse(
                &source,
                idx + 1,
                format!("id {id} is `{}`, map says `{}`", category.name(), name.trim()),
            ));
        }
        if seen.contains(&category) {
            return Err(Error::parse(&source, idx + 1, format!("id {id} listed twice")));
        }
        seen.push(category);
    }
    if seen.len() != Category::COUNT {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("map lists {} of {} categories", seen.len(), Category::COUNT),
        });
    }
    Ok(seen)
}

pub fn format_category_map() -> String {
    Category::ALL.iter().map(|c| format!("{} {}\n", c.id(), c.name())).collect()
}

// ---------------------------------------------------------------- split

/// Sizes for splitting `n` items by `ratios` using largest-remainder
/// rounding; leftover items go to the largest fractional parts, earlier
/// splits first on ties.
pub fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> Result<[usize; 3]> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|x| !(*x > 0.0 && x.is_finite())) || ((r[0] + r[1] + r[2]) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be positive and sum to 1")));
    }
    let exact: Vec<f64> = r.iter().map(|x| x * n as f64).collect();
    let mut sizes: [usize; 3] = [0; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let mut left = n - sizes.iter().sum::<usize>();
    for i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[*i] += 1;
        left -= 1;
    }
    Ok(sizes)
}

/// Seeded shuffle followed by a `train, val, test` split.
pub fn split_dataset<T: Clone>(ids: &[T], ratios: (f64, f64, f64), seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let [n_train, n_val, _] = split_sizes(ids.len(), ratios)?;
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = shuffled.split_off(n_train + n_val);
    let val = shuffled.split_off(n_train);
    Ok((shuffled, val, test))
}
