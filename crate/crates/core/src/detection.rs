//! Detection data model, raw detector output postprocessing and the
//! detection sources that feed the pipeline.
//!
//! Neural inference stays outside this crate. Detections arrive either from a
//! replay file or from a line-delimited stream produced by another process,
//! both using the record grammar
//!
//! ```text
//! frame_id category_id confidence x1 y1 x2 y2
//! ```
//!
//! with pixel coordinates in frame space. Streams additionally mark frame
//! boundaries with `#frame <id>` lines.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, ChildStdout, Command, Stdio};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Obstacle category. Ids follow the alphabetical order of the names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ManholeCover = 0,
    NonDirectionalCrack = 1,
    PineCone = 2,
    Pothole = 3,
    TreeBranch = 4,
    TruncatedDome = 5,
}

impl Category {
    pub const COUNT: usize = 6;

    pub const ALL: [Category; Category::COUNT] = [
        Category::ManholeCover,
        Category::NonDirectionalCrack,
        Category::PineCone,
        Category::Pothole,
        Category::TreeBranch,
        Category::TruncatedDome,
    ];

    pub fn from_id(id: i64) -> Result<Category> {
        usize::try_from(id)
            .ok()
            .and_then(|i| Category::ALL.get(i).copied())
            .ok_or(Error::Category(id))
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::ManholeCover => "manhole_cover",
            Category::NonDirectionalCrack => "non_directional_crack",
            Category::PineCone => "pine_cone",
            Category::Pothole => "pothole",
            Category::TreeBranch => "tree_branch",
            Category::TruncatedDome => "truncated_dome",
        }
    }

    pub fn from_name(name: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Axis-aligned box in pixel corner convention, continuous coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
            && self.x1 < self.x2
            && self.y1 < self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Clamps all corners into `[0, width] x [0, height]`.
    pub fn clamp_to(&self, width: u32, height: u32) -> BBox {
        let (w, h) = (f64::from(width), f64::from(height));
        BBox {
            x1: self.x1.clamp(0.0, w),
            y1: self.y1.clamp(0.0, h),
            x2: self.x2.clamp(0.0, w),
            y2: self.y2.clamp(0.0, h),
        }
    }

    pub fn scale(&self, sx: f64, sy: f64) -> BBox {
        BBox {
            x1: self.x1 * sx,
            y1: self.y1 * sy,
            x2: self.x2 * sx,
            y2: self.y2 * sy,
        }
    }

    /// Intersection over union; 0 for disjoint boxes.
    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = self.x2.min(other.x2) - self.x1.max(other.x1);
        let ih = self.y2.min(other.y2) - self.y1.max(other.y1);
        if iw <= 0.0 || ih <= 0.0 {
            return 0.0;
        }
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_id: u64,
    pub category: Category,
    pub confidence: f64,
    pub bbox: BBox,
}

impl Detection {
    /// Formats the detection as one replay record (no trailing newline).
    pub fn to_record(&self) -> String {
        format!(
            "{} {} {} {} {} {} {}",
            self.frame_id,
            self.category.id(),
            self.confidence,
            self.bbox.x1,
            self.bbox.y1,
            self.bbox.x2,
            self.bbox.y2
        )
    }
}

/// Parses one replay record. Errors carry `source_name` and `line`.
pub fn parse_record(text: &str, source_name: &str, line: usize) -> Result<Detection> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 7 {
        return Err(Error::parse(
            source_name,
            line,
            format!("expected 7 fields, found {}", fields.len()),
        ));
    }
    fn num<T: FromStr>(s: &str, what: &str, src: &str, line: usize) -> Result<T> {
        s.parse()
            .map_err(|_| Error::parse(src, line, format!("invalid {what} `{s}`")))
    }
    let frame_id: u64 = num(fields[0], "frame id", source_name, line)?;
    let category_id: i64 = num(fields[1], "category id", source_name, line)?;
    let category = Category::from_id(category_id)
        .map_err(|_| Error::parse(source_name, line, format!("unknown category id {category_id}")))?;
    let confidence: f64 = num(fields[2], "confidence", source_name, line)?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(Error::parse(
            source_name,
            line,
            format!("confidence {confidence} outside [0, 1]"),
        ));
    }
    let mut c = [0.0f64; 4];
    for (slot, s) in c.iter_mut().zip(&fields[3..]) {
        *slot = num(s, "coordinate", source_name, line)?;
    }
    let bbox = BBox::new(c[0], c[1], c[2], c[3]);
    if !bbox.is_valid() {
        return Err(Error::parse(source_name, line, "degenerate bounding box"));
    }
    Ok(Detection {
        frame_id,
        category,
        confidence,
        bbox,
    })
}

/// A candidate box straight out of a detector head, in model-input pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCandidate {
    pub bbox: BBox,
    pub category: Category,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocessParams {
    pub conf_thresh: f64,
    pub nms_iou: f64,
    pub model_size: (u32, u32),
    pub frame_size: (u32, u32),
}

impl Default for PostprocessParams {
    fn default() -> Self {
        PostprocessParams {
            conf_thresh: 0.25,
            nms_iou: 0.45,
            model_size: (640, 480),
            frame_size: (640, 480),
        }
    }
}

/// Confidence filtering, rescale into frame space and category-wise NMS.
///
/// Boxes are scaled and clamped to the frame before suppression, so NMS sees
/// the boxes that are returned and running it again on its own output is a
/// no-op. Boxes that collapse after clamping are dropped. Output is sorted by
/// descending confidence (stable with respect to input order).
pub fn postprocess(raw: &[RawCandidate], params: &PostprocessParams, frame_id: u64) -> Vec<Detection> {
    let (mw, mh) = params.model_size;
    let (fw, fh) = params.frame_size;
    let (sx, sy) = (f64::from(fw) / f64::from(mw), f64::from(fh) / f64::from(mh));
    let mut candidates: Vec<Detection> = raw
        .iter()
        .filter(|c| c.confidence >= params.conf_thresh && c.bbox.is_valid())
        .filter_map(|c| {
            let bbox = if params.model_size == params.frame_size {
                c.bbox
            } else {
                c.bbox.scale(sx, sy)
            }
            .clamp_to(fw, fh);
            bbox.is_valid().then_some(Detection {
                frame_id,
                category: c.category,
                confidence: c.confidence,
                bbox,
            })
        })
        .collect();
    candidates.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

    let mut kept: Vec<Detection> = Vec::with_capacity(candidates.len());
    for d in candidates {
        let suppressed = kept
            .iter()
            .any(|k| k.category == d.category && k.bbox.iou(&d.bbox) > params.nms_iou);
        if !suppressed {
            kept.push(d);
        }
    }
    kept
}

/// Per-frame detection provider. `frame_id` must be non-decreasing across
/// calls.
pub trait DetectionSource {
    fn next_detections(&mut self, frame_id: u64) -> Result<Vec<Detection>>;
}

fn check_order(last: &mut Option<u64>, frame_id: u64) -> Result<()> {
    if let Some(prev) = *last {
        if frame_id < prev {
            return Err(Error::Protocol(format!(
                "frame {frame_id} requested after frame {prev}"
            )));
        }
    }
    *last = Some(frame_id);
    Ok(())
}

/// File-backed source returning exactly the recorded detections.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    frames: BTreeMap<u64, Vec<Detection>>,
    last_frame: Option<u64>,
    last_requested: Option<u64>,
}

impl ReplaySource {
    pub fn open(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Blank lines and `#` comment lines are ignored.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut frames: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let det = parse_record(trimmed, source_name, idx + 1)?;
            frames.entry(det.frame_id).or_default().push(det);
        }
        let last_frame = frames.keys().next_back().copied();
        Ok(ReplaySource {
            frames,
            last_frame,
            last_requested: None,
        })
    }

    /// Extends the recording to `frame_id` so trailing frames without
    /// detections replay as empty instead of ending the stream.
    pub fn with_last_frame(mut self, frame_id: u64) -> Self {
        self.last_frame = Some(self.last_frame.map_or(frame_id, |f| f.max(frame_id)));
        self
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last_frame
    }

    pub fn detection_count(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    /// All recorded detections in frame order.
    pub fn all(&self) -> impl Iterator<Item = &Detection> {
        self.frames.values().flatten()
    }
}

impl DetectionSource for ReplaySource {
    fn next_detections(&mut self, frame_id: u64) -> Result<Vec<Detection>> {
        check_order(&mut self.last_requested, frame_id)?;
        match self.last_frame {
            Some(last) if frame_id <= last => {
                Ok(self.frames.get(&frame_id).cloned().unwrap_or_default())
            }
            _ => Err(Error::EndOfStream(frame_id)),
        }
    }
}

/// Line-delimited stream source. Each frame starts with `#frame <id>`; the
/// records that follow must carry that frame id. A frame is complete once the
/// next header (or end of input) is read.
pub struct StreamSource<R> {
    reader: R,
    source_name: String,
    line: usize,
    last_requested: Option<u64>,
    // header read ahead of its records
    next_header: Option<u64>,
    // complete frame not yet requested
    pending: Option<(u64, Vec<Detection>)>,
    eof: bool,
    child: Option<Child>,
}

impl<R: BufRead> StreamSource<R> {
    pub fn new(reader: R, source_name: impl Into<String>) -> Self {
        StreamSource {
            reader,
            source_name: source_name.into(),
            line: 0,
            last_requested: None,
            next_header: None,
            pending: None,
            eof: false,
            child: None,
        }
    }

    fn parse_header(&self, text: &str) -> Result<u64> {
        let id = text["#frame".len()..].trim();
        id.parse().map_err(|_| {
            Error::Protocol(format!(
                "{}:{}: invalid frame header `{text}`",
                self.source_name, self.line
            ))
        })
    }

    /// Reads one whole frame block, or `None` at end of input.
    fn read_block(&mut self) -> Result<Option<(u64, Vec<Detection>)>> {
        let mut buf = String::new();
        let mut current = self.next_header.take();
        let mut dets = Vec::new();
        while !self.eof {
            buf.clear();
            let n = self
                .reader
                .read_line(&mut buf)
                .map_err(|e| Error::io(&self.source_name, e))?;
            if n == 0 {
                self.eof = true;
                break;
            }
            self.line += 1;
            let text = buf.trim();
            if text.is_empty() {
                continue;
            }
            if text.starts_with("#frame") {
                let id = self.parse_header(text)?;
                if let Some(cur) = current {
                    if id <= cur {
                        return Err(Error::Protocol(format!(
                            "{}:{}: frame {id} follows frame {cur}",
                            self.source_name, self.line
                        )));
                    }
                    self.next_header = Some(id);
                    return Ok(Some((cur, dets)));
                }
                current = Some(id);
                continue;
            }
            if text.starts_with('#') {
                continue;
            }
            let Some(cur) = current else {
                return Err(Error::Protocol(format!(
                    "{}:{}: record before any #frame header",
                    self.source_name, self.line
                )));
            };
            let det = parse_record(text, &self.source_name, self.line)?;
            if det.frame_id != cur {
                return Err(Error::Protocol(format!(
                    "{}:{}: record for frame {} inside frame {cur}",
                    self.source_name, self.line, det.frame_id
                )));
            }
            dets.push(det);
        }
        Ok(current.map(|cur| (cur, dets)))
    }
}

impl StreamSource<BufReader<ChildStdout>> {
    /// Spawns `program args...` and reads detections from its standard output.
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::io(program, e))?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let mut source = StreamSource::new(BufReader::new(stdout), program);
        source.child = Some(child);
        Ok(source)
    }
}

impl<R> Drop for StreamSource<R> {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl<R: BufRead> DetectionSource for StreamSource<R> {
    fn next_detections(&mut self, frame_id: u64) -> Result<Vec<Detection>> {
        check_order(&mut self.last_requested, frame_id)?;
        loop {
            if let Some((id, _)) = &self.pending {
                match (*id).cmp(&frame_id) {
                    std::cmp::Ordering::Greater => return Ok(Vec::new()),
                    std::cmp::Ordering::Equal => {
                        return Ok(self.pending.take().map(|(_, d)| d).unwrap_or_default())
                    }
                    std::cmp::Ordering::Less => self.pending = None,
                }
            }
            match self.read_block()? {
                Some(block) => self.pending = Some(block),
                None => return Err(Error::EndOfStream(frame_id)),
            }
        }
    }
}

impl DetectionSource for Box<dyn DetectionSource + Send> {
    fn next_detections(&mut self, frame_id: u64) -> Result<Vec<Detection>> {
        (**self).next_detections(frame_id)
    }
}
