//! End-to-end runs over recorded clips and synthetic load.
//!
//! `run_replay` streams a manifest through align → detect → fuse → assess
//! and writes warning events and fused detections. Stages can run on their
//! own threads connected by bounded in-order queues; every stateful stage
//! (detection source, alert tracker) has a single owner, so the pipelined
//! and sequential modes produce the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alert::{AlertConfig, AlertTracker};
use crate::dataset::{self, Calibration, ReplayManifest};
use crate::detection::{BBox, Category, Detection, DetectionSource, ReplaySource, StreamSource};
use crate::error::{Error, Result};
use crate::fusion::{self, FusedDetection, FusionConfig};
use crate::geometry::{self, DepthFrame, Extrinsics, Intrinsics};
use crate::imu::{self, ImuParams, VibrationMetrics, VibrationPoint, WindowMetrics};
use crate::render;

pub const EVENTS_FILE: &str = "events.txt";
pub const FUSED_FILE: &str = "fused.txt";

/// Where per-frame detections come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DetectionSpec {
    Replay(PathBuf),
    /// Child process writing the stream protocol to its standard output.
    Process { program: String, args: Vec<String> },
    /// Stream protocol on this process's standard input.
    Stdin,
}

impl DetectionSpec {
    fn open(&self, last_frame: Option<u64>) -> Result<Box<dyn DetectionSource + Send>> {
        Ok(match self {
            DetectionSpec::Replay(path) => {
                let src = ReplaySource::open(path)?;
                Box::new(match last_frame {
                    Some(f) => src.with_last_frame(f),
                    None => src,
                })
            }
            DetectionSpec::Process { program, args } => Box::new(StreamSource::spawn(program, args)?),
            DetectionSpec::Stdin => Box::new(StreamSource::new(BufReader::new(std::io::stdin()), "<stdin>")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecutionMode {
    Sequential,
    /// One thread per stage, joined by queues holding at most `queue_depth` frames.
    Pipelined { queue_depth: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    /// Overrides the manifest's detection file.
    pub detections: Option<DetectionSpec>,
    pub fusion: FusionConfig,
    pub alert: AlertConfig,
    /// Frame size the detections are expressed in.
    pub inference_size: (u32, u32),
    pub imu: ImuParams,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub mode: ExecutionMode,
}

impl PipelineConfig {
    pub fn new(manifest: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            manifest: manifest.into(),
            detections: None,
            fusion: FusionConfig::default(),
            alert: AlertConfig::default(),
            inference_size: (640, 480),
            imu: ImuParams::default(),
            out_dir: out_dir.into(),
            seed: 0,
            mode: ExecutionMode::Pipelined { queue_depth: 4 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: usize,
    pub detections: usize,
    pub warnings: usize,
    pub mean_latency_ms: f64,
    pub median_latency_ms: f64,
    pub p99_latency_ms: f64,
    pub fps: f64,
}

impl RunSummary {
    fn from_latencies(mut latencies: Vec<Duration>, wall: Duration, detections: usize, warnings: usize) -> Self {
        let frames = latencies.len();
        latencies.sort_unstable();
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        let nearest_rank = |q: f64| -> f64 {
            if frames == 0 {
                0.0
            } else {
                let rank = ((q * frames as f64).ceil() as usize).clamp(1, frames);
                ms(latencies[rank - 1])
            }
        };
        let mean = if frames == 0 {
            0.0
        } else {
            latencies.iter().map(|d| ms(*d)).sum::<f64>() / frames as f64
        };
        let secs = wall.as_secs_f64();
        RunSummary {
            frames,
            detections,
            warnings,
            mean_latency_ms: mean,
            median_latency_ms: nearest_rank(0.5),
            p99_latency_ms: nearest_rank(0.99),
            fps: if frames == 0 || secs == 0.0 { 0.0 } else { frames as f64 / secs },
        }
    }
}

struct LoadedFrame {
    id: u64,
    depth: DepthFrame,
    started: Instant,
}

struct FusedFrame {
    id: u64,
    fused: Vec<FusedDetection>,
    started: Instant,
}

/// Output files are written under temporary names and renamed once the run
/// succeeds; on failure they are removed.
struct OutputFiles {
    events: (PathBuf, PathBuf, fs::File),
    fused: (PathBuf, PathBuf, fs::File),
}

impl OutputFiles {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let open = |name: &str| -> Result<(PathBuf, PathBuf, fs::File)> {
            let final_path = dir.join(name);
            let tmp = dir.join(format!("{name}.partial"));
            let f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            Ok((tmp, final_path, f))
        };
        let events = open(EVENTS_FILE)?;
        let fused = match open(FUSED_FILE) {
            Ok(f) => f,
            Err(e) => {
                let _ = fs::remove_file(&events.0);
                return Err(e);
            }
        };
        Ok(OutputFiles { events, fused })
    }

    fn commit(self) -> Result<()> {
        for (tmp, final_path, mut f) in [self.events, self.fused] {
            f.flush().map_err(|e| Error::io(&tmp, e))?;
            drop(f);
            fs::rename(&tmp, &final_path).map_err(|e| Error::io(&final_path, e))?;
        }
        Ok(())
    }

    fn discard(self) {
        for (tmp, _, f) in [self.events, self.fused] {
            drop(f);
            let _ = fs::remove_file(tmp);
        }
    }
}

fn load_frame(manifest: &ReplayManifest, calib: &Calibration, index: usize) -> Result<DepthFrame> {
    let entry = &manifest.frames[index];
    let path = manifest.resolve(&entry.depth);
    let raw = dataset::load_depth_frame(&path, calib.depth_scale, entry.id)?;
    if manifest.aligned {
        if (raw.width, raw.height) != (calib.color.width, calib.color.height) {
            return Err(Error::Format {
                path,
                message: "pre-aligned depth must match the color geometry".into(),
            });
        }
        Ok(raw)
    } else {
        geometry::align_depth_to_color(&raw, &calib.depth, &calib.color, &calib.depth_to_color)
    }
}

fn to_color_geometry(dets: Vec<Detection>, inference_size: (u32, u32), color: &Intrinsics) -> Vec<Detection> {
    if inference_size == (color.width, color.height) {
        return dets;
    }
    let sx = f64::from(color.width) / f64::from(inference_size.0);
    let sy = f64::from(color.height) / f64::from(inference_size.1);
    dets.into_iter()
        .filter_map(|mut d| {
            d.bbox = d.bbox.scale(sx, sy).clamp_to(color.width, color.height);
            d.bbox.is_valid().then_some(d)
        })
        .collect()
}

struct Sink<'a> {
    files: &'a mut OutputFiles,
    tracker: AlertTracker,
    latencies: Vec<Duration>,
    detections: usize,
    warnings: usize,
}

impl Sink<'_> {
    fn accept(&mut self, frame: FusedFrame) -> Result<()> {
        let events = self.tracker.assess(frame.id, &frame.fused);
        let mut fused_text = String::new();
        for f in &frame.fused {
            let _ = writeln!(fused_text, "{}", f.to_record());
        }
        let mut event_text = String::new();
        for e in &events {
            let _ = writeln!(event_text, "{}", e.to_record());
        }
        let (ref tmp_f, _, ref mut ff) = self.files.fused;
        ff.write_all(fused_text.as_bytes()).map_err(|e| Error::io(tmp_f, e))?;
        let (ref tmp_e, _, ref mut fe) = self.files.events;
        fe.write_all(event_text.as_bytes()).map_err(|e| Error::io(tmp_e, e))?;
        self.detections += frame.fused.len();
        self.warnings += events.len();
        self.latencies.push(frame.started.elapsed());
        Ok(())
    }
}

/// Replays a recorded clip through the full frame pipeline.
pub fn run_replay(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.fusion.validate()?;
    cfg.alert.validate()?;
    let manifest = dataset::load_manifest(&cfg.manifest)?;
    let calib = dataset::load_calibration(&manifest.resolve(&manifest.calibration))?;
    let spec = match (&cfg.detections, &manifest.detections) {
        (Some(spec), _) => spec.clone(),
        (None, Some(path)) => DetectionSpec::Replay(manifest.resolve(path)),
        (None, None) => return Err(Error::Config("no detection source given".into())),
    };
    if let DetectionSpec::Replay(p) = &spec {
        if !p.is_file() {
            return Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")));
        }
    }
    let last_frame = manifest.frames.last().map(|f| f.id);
    let mut source = spec.open(last_frame)?;
    let fusion_cfg = FusionConfig {
        rng_seed: cfg.seed,
        ..cfg.fusion
    };

    let mut files = OutputFiles::create(&cfg.out_dir)?;
    let wall = Instant::now();
    let mut sink = Sink {
        files: &mut files,
        tracker: AlertTracker::new(cfg.alert)?,
        latencies: Vec::with_capacity(manifest.frames.len()),
        detections: 0,
        warnings: 0,
    };

    let fuse_frame = |source: &mut Box<dyn DetectionSource + Send>, frame: LoadedFrame| -> Result<FusedFrame> {
        let dets = source.next_detections(frame.id)?;
        let dets = to_color_geometry(dets, cfg.inference_size, &calib.color);
        Ok(FusedFrame {
            id: frame.id,
            fused: fusion::fuse(&dets, &frame.depth, &fusion_cfg),
            started: frame.started,
        })
    };

    let result: Result<()> = match cfg.mode {
        ExecutionMode::Sequential => (0..manifest.frames.len()).try_for_each(|i| {
            let started = Instant::now();
            let depth = load_frame(&manifest, &calib, i)?;
            let loaded = LoadedFrame {
                id: manifest.frames[i].id,
                depth,
                started,
            };
            sink.accept(fuse_frame(&mut source, loaded)?)
        }),
        ExecutionMode::Pipelined { queue_depth } => {
            let depth_q = queue_depth.max(1);
            thread::scope(|scope| {
                let (load_tx, load_rx) = mpsc::sync_channel::<Result<LoadedFrame>>(depth_q);
                let (fuse_tx, fuse_rx) = mpsc::sync_channel::<Result<FusedFrame>>(depth_q);
                let manifest = &manifest;
                let calib = &calib;
                scope.spawn(move || {
                    for i in 0..manifest.frames.len() {
                        let started = Instant::now();
                        let item = load_frame(manifest, calib, i).map(|depth| LoadedFrame {
                            id: manifest.frames[i].id,
                            depth,
                            started,
                        });
                        let failed = item.is_err();
                        if load_tx.send(item).is_err() || failed {
                            break;
                        }
                    }
                });
                let source = &mut source;
                let fuse_frame = &fuse_frame;
                scope.spawn(move || {
                    for item in load_rx {
                        let out = item.and_then(|frame| fuse_frame(source, frame));
                        let failed = out.is_err();
                        if fuse_tx.send(out).is_err() || failed {
                            break;
                        }
                    }
                });
                for item in fuse_rx {
                    sink.accept(item?)?;
                }
                Ok(())
            })
        }
    };

    let (latencies, detections, warnings) = (sink.latencies, sink.detections, sink.warnings);
    match result {
        Ok(()) => {
            files.commit()?;
            Ok(RunSummary::from_latencies(latencies, wall.elapsed(), detections, warnings))
        }
        Err(e) => {
            files.discard();
            Err(e)
        }
    }
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub frames: usize,
    pub dets_per_frame: usize,
    pub size: (u32, u32),
    pub seed: u64,
    pub fusion: FusionConfig,
    pub alert: AlertConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            frames: 1000,
            dets_per_frame: 5,
            size: (640, 480),
            seed: 0,
            fusion: FusionConfig::default(),
            alert: AlertConfig::default(),
        }
    }
}

/// Calibration used for synthetic load: a D435-like pinhole with a 15 mm
/// baseline between depth and color.
pub fn synthetic_calibration(size: (u32, u32)) -> Calibration {
    let (w, h) = size;
    let intr = Intrinsics {
        width: w,
        height: h,
        fx: 0.96 * f64::from(w),
        fy: 0.96 * f64::from(w),
        cx: (f64::from(w) - 1.0) / 2.0,
        cy: (f64::from(h) - 1.0) / 2.0,
    };
    Calibration {
        depth: intr,
        color: intr,
        depth_to_color: Extrinsics::from_translation(0.015, 0.0, 0.0),
        depth_scale: dataset::DEFAULT_DEPTH_SCALE,
    }
}

/// Ground-plane depth raster: far at the top row, near at the bottom, with
/// about 3% missing returns.
pub fn synthetic_depth(size: (u32, u32), frame_id: u64, rng: &mut impl Rng) -> DepthFrame {
    let (w, h) = size;
    let mut values = Vec::with_capacity(w as usize * h as usize);
    for v in 0..h {
        let near = f64::from(v) / f64::from(h.max(2) - 1);
        let base = 12_000.0 - 10_500.0 * near;
        for _ in 0..w {
            if rng.random::<f64>() < 0.03 {
                values.push(0);
            } else {
                values.push((base + rng.random_range(-20.0..20.0)) as u16);
            }
        }
    }
    DepthFrame::new(w, h, values, dataset::DEFAULT_DEPTH_SCALE, frame_id).expect("sized by construction")
}

pub fn synthetic_detections(size: (u32, u32), frame_id: u64, count: usize, rng: &mut impl Rng) -> Vec<Detection> {
    let (w, h) = (f64::from(size.0), f64::from(size.1));
    (0..count)
        .map(|_| {
            let bw = rng.random_range(0.05..0.3) * w;
            let bh = rng.random_range(0.05..0.3) * h;
            let x1 = rng.random_range(0.0..w - bw);
            let y1 = rng.random_range(0.0..h - bh);
            Detection {
                frame_id,
                category: Category::ALL[rng.random_range(0..Category::COUNT)],
                confidence: rng.random_range(0.25..1.0),
                bbox: BBox::new(x1, y1, x1 + bw, y1 + bh),
            }
        })
        .collect()
}

const BENCH_DEPTH_POOL: usize = 8;

/// Align + fuse + assess on synthetic in-memory frames, single-threaded.
/// No disk access or model inference is timed.
pub fn run_bench(cfg: &BenchConfig) -> Result<RunSummary> {
    if cfg.size.0 == 0 || cfg.size.1 == 0 {
        return Err(Error::Config("bench frame size must be positive".into()));
    }
    cfg.fusion.validate()?;
    let calib = synthetic_calibration(cfg.size);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pool: Vec<DepthFrame> = (0..BENCH_DEPTH_POOL.min(cfg.frames))
        .map(|i| synthetic_depth(cfg.size, i as u64, &mut rng))
        .collect();
    let dets: Vec<Vec<Detection>> = (0..cfg.frames)
        .map(|i| synthetic_detections(cfg.size, i as u64, cfg.dets_per_frame, &mut rng))
        .collect();

    let mut tracker = AlertTracker::new(cfg.alert)?;
    let mut latencies = Vec::with_capacity(cfg.frames);
    let (mut detections, mut warnings) = (0, 0);
    let fusion_cfg = FusionConfig {
        rng_seed: cfg.seed,
        ..cfg.fusion
    };
    let wall = Instant::now();
    for (i, frame_dets) in dets.iter().enumerate() {
        let started = Instant::now();
        let mut depth = geometry::align_depth_to_color(&pool[i % pool.len()], &calib.depth, &calib.color, &calib.depth_to_color)?;
        depth.frame_id = i as u64;
        let fused = fusion::fuse(frame_dets, &depth, &fusion_cfg);
        let events = tracker.assess(i as u64, &fused);
        latencies.push(started.elapsed());
        detections += fused.len();
        warnings += events.len();
    }
    Ok(RunSummary::from_latencies(latencies, wall.elapsed(), detections, warnings))
}

// ---------------------------------------------------------------- imu

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuReport {
    pub source: String,
    pub series: Vec<VibrationPoint>,
    pub windows: Vec<WindowMetrics>,
    pub overall: Option<VibrationMetrics>,
}

pub fn analyze_imu(samples: &[imu::AccelSample], params: ImuParams, window_s: f64, source: &str) -> Result<ImuReport> {
    let series = imu::process_stream(samples, params)?;
    let windows = imu::windowed_metrics(&series, window_s)?;
    let overall = if series.is_empty() {
        None
    } else {
        Some(imu::vibration_metrics(&series)?)
    };
    Ok(ImuReport {
        source: source.to_string(),
        series,
        windows,
        overall,
    })
}

/// Loads and analyzes one log, and optionally a second one for comparison.
pub fn run_imu(log: &Path, compare: Option<&Path>, params: ImuParams, window_s: f64) -> Result<Vec<ImuReport>> {
    let mut logs = vec![log];
    logs.extend(compare);
    logs.into_iter()
        .map(|p| {
            let samples = dataset::load_imu_log(p)?;
            analyze_imu(&samples, params, window_s, &p.display().to_string())
        })
        .collect()
}

pub fn format_series_csv(series: &[VibrationPoint]) -> String {
    let mut out = String::from("t,raw,smoothed\n");
    for p in series {
        let _ = writeln!(out, "{},{},{}", p.t, p.raw, p.smoothed);
    }
    out
}

/// Window table; with two reports the windows are laid out side by side.
pub fn format_window_table(reports: &[ImuReport]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:>9} {:>9}", "start_s", "end_s");
    for i in 0..reports.len() {
        let _ = write!(out, " {:>9} {:>9}", format!("peak_{}", i + 1), format!("rms_{}", i + 1));
    }
    out.push('\n');
    let rows = reports.iter().map(|r| r.windows.len()).max().unwrap_or(0);
    for k in 0..rows {
        let first = reports.iter().find_map(|r| r.windows.get(k)).expect("row exists in some report");
        let _ = write!(out, "{:>9.3} {:>9.3}", first.start, first.end);
        for r in reports {
            match r.windows.get(k) {
                Some(w) => {
                    let _ = write!(out, " {:>9.4} {:>9.4}", w.peak, w.rms);
                }
                None => {
                    let _ = write!(out, " {:>9} {:>9}", "-", "-");
                }
            }
        }
        out.push('\n');
    }
    for (i, r) in reports.iter().enumerate() {
        if let Some(m) = r.overall {
            let _ = writeln!(out, "# log {}: {} peak {:.4} rms {:.4}", i + 1, r.source, m.peak, m.rms);
        }
    }
    out
}

// ---------------------------------------------------------------- render

/// Reads a fused-detection file into per-frame lists.
pub fn load_fused(path: &Path) -> Result<BTreeMap<u64, Vec<FusedDetection>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut frames: BTreeMap<u64, Vec<FusedDetection>> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f = FusedDetection::parse_record(line, &name, idx + 1)?;
        frames.entry(f.detection.frame_id).or_default().push(f);
    }
    Ok(frames)
}

/// Writes one overlay PNG per manifest frame into `out_dir`: boxes,
/// category, confidence and distance labels, and a warning banner on frames
/// that raise an alert. Returns the number of images written.
pub fn run_render(manifest_path: &Path, fused_path: &Path, out_dir: &Path, alert: AlertConfig) -> Result<usize> {
    let manifest = dataset::load_manifest(manifest_path)?;
    let fused = load_fused(fused_path)?;
    let mut tracker = AlertTracker::new(alert)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let empty = Vec::new();
    for entry in &manifest.frames {
        let color_path = manifest.resolve(&entry.color);
        let mut img = image::open(&color_path)
            .map_err(|e| Error::Format {
                path: color_path.clone(),
                message: e.to_string(),
            })?
            .to_rgb8();
        let frame_fused = fused.get(&entry.id).unwrap_or(&empty);
        let events = tracker.assess(entry.id, frame_fused);
        render::draw_overlay(&mut img, frame_fused, &events);
        let out = out_dir.join(format!("{:06}.png", entry.id));
        img.save(&out).map_err(|e| Error::Format {
            path: out.clone(),
            message: e.to_string(),
        })?;
    }
    Ok(manifest.frames.len())
}
