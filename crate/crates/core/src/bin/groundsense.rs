use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use groundsense::alert::AlertConfig;
use groundsense::dataset::{self, ImageSizes};
use groundsense::eval::{self, EvalParams, Interpolation};
use groundsense::fusion::FusionConfig;
use groundsense::imu::ImuParams;
use groundsense::pipeline::{self, BenchConfig, DetectionSpec, ExecutionMode, PipelineConfig};
use groundsense::{Error, ReplaySource, Result};

#[derive(Parser)]
#[command(name = "groundsense", version, about = "Ground-obstacle proximity pipeline for e-scooters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse recorded detections with depth and emit proximity warnings.
    Replay(ReplayArgs),
    /// Score predictions against annotations into a per-category report table.
    Eval(EvalArgs),
    /// Vertical vibration analysis of accelerometer logs.
    Imu(ImuArgs),
    /// Throughput of align + fuse + assess on synthetic frames.
    Bench(BenchArgs),
    /// Draw boxes, distances and warning banners onto the color frames.
    Render(RenderArgs),
    /// Seeded train/val/test split of an id list.
    Split(SplitArgs),
}

#[derive(Args)]
struct AlertArgs {
    /// Warning distance in meters (inclusive).
    #[arg(long, default_value_t = 4.0)]
    threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    clear_margin: f64,
    #[arg(long, default_value_t = 1)]
    min_consecutive: u32,
}

impl AlertArgs {
    fn config(&self) -> AlertConfig {
        AlertConfig {
            threshold_m: self.threshold,
            clear_margin_m: self.clear_margin,
            min_consecutive: self.min_consecutive,
        }
    }
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Replay file, or `-` for the stream protocol on stdin. Defaults to the
    /// manifest's detection file.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Spawn this command and read the stream protocol from its stdout.
    #[arg(long, conflicts_with = "detections", num_args = 1.., allow_hyphen_values = true)]
    detect_cmd: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Run every stage on the calling thread.
    #[arg(long)]
    sequential: bool,
    #[arg(long, default_value_t = 4)]
    queue_depth: usize,
    #[arg(long, default_value_t = 24)]
    samples: usize,
    #[arg(long, default_value_t = 0.15)]
    radius_frac: f64,
    #[arg(long, default_value_t = 0.5)]
    trim_keep: f64,
    /// Frame size the detections are expressed in.
    #[arg(long, default_value = "640x480", value_parser = parse_size)]
    inference_size: (u32, u32),
    #[command(flatten)]
    alert: AlertArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Predictions in replay format; frame_id is the image id.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of `<image_id>.txt` annotation files.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = "allpoint")]
    interp: Interpolation,
    #[arg(long, default_value = "640x480", value_parser = parse_size)]
    image_size: (u32, u32),
    /// Shared category map to check against the built-in ids.
    #[arg(long)]
    categories: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Exit with status 1 when mAP50 is below this value.
    #[arg(long)]
    min_map50: Option<f64>,
}

#[derive(Args)]
struct ImuArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Directory for the per-sample series CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Window length in seconds for peak / RMS.
    #[arg(long, default_value_t = 0.5)]
    window: f64,
    #[arg(long, default_value_t = 0.98)]
    alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    q: f64,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1000)]
    frames: usize,
    #[arg(long, default_value_t = 5)]
    dets_per_frame: usize,
    #[arg(long, default_value = "640x480", value_parser = parse_size)]
    size: (u32, u32),
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    fused: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    alert: AlertArgs,
}

#[derive(Args)]
struct SplitArgs {
    /// Text file with one id per line.
    #[arg(long)]
    list: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "0.7,0.2,0.1")]
    ratios: String,
    /// Writes train.txt, val.txt and test.txt here.
    #[arg(long)]
    out: PathBuf,
}

fn parse_size(s: &str) -> std::result::Result<(u32, u32), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WIDTHxHEIGHT, got `{s}`"))?;
    let w: u32 = w.parse().map_err(|_| format!("invalid width `{w}`"))?;
    let h: u32 = h.parse().map_err(|_| format!("invalid height `{h}`"))?;
    if w == 0 || h == 0 {
        return Err("sizes must be positive".into());
    }
    Ok((w, h))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

fn replay(args: ReplayArgs) -> Result<()> {
    let detections = match (&args.detect_cmd, &args.detections) {
        (Some(cmd), _) => Some(DetectionSpec::Process {
            program: cmd[0].clone(),
            args: cmd[1..].to_vec(),
        }),
        (None, Some(p)) if p.as_os_str() == "-" => Some(DetectionSpec::Stdin),
        (None, Some(p)) => Some(DetectionSpec::Replay(p.clone())),
        (None, None) => None,
    };
    let cfg = PipelineConfig {
        detections,
        fusion: FusionConfig {
            n_samples: args.samples,
            radius_frac: args.radius_frac,
            trim_keep: args.trim_keep,
            rng_seed: args.seed,
        },
        alert: args.alert.config(),
        inference_size: args.inference_size,
        seed: args.seed,
        mode: if args.sequential {
            ExecutionMode::Sequential
        } else {
            ExecutionMode::Pipelined {
                queue_depth: args.queue_depth,
            }
        },
        ..PipelineConfig::new(args.manifest, args.out)
    };
    let summary = pipeline::run_replay(&cfg)?;
    println!("{}", to_json(&summary));
    Ok(())
}

fn evaluate(args: EvalArgs) -> Result<ExitCode> {
    if let Some(map) = &args.categories {
        dataset::load_category_map(map)?;
    }
    let gt = dataset::load_annotations(&args.gt, &ImageSizes::Uniform(args.image_size.0, args.image_size.1))?;
    let preds = ReplaySource::open(&args.pred)?;
    let dets: Vec<_> = preds.all().cloned().collect();
    let params = EvalParams {
        interpolation: args.interp,
        num_images: Some(gt.image_ids.len()),
        ..EvalParams::default()
    };
    let report = eval::evaluate(&dets, &gt.boxes, &params)?;
    print!("{}", report.render_table());
    if let Some(path) = &args.json {
        write_file(path, &to_json(&report))?;
    }
    if let Some(min) = args.min_map50 {
        if report.map50() < min {
            eprintln!("mAP50 {:.4} is below the required {min}", report.map50());
            return Ok(ExitCode::from(1));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn imu(args: ImuArgs) -> Result<()> {
    let params = ImuParams {
        alpha: args.alpha,
        process_noise: args.q,
        measurement_noise: args.r,
        ..ImuParams::default()
    };
    let reports = pipeline::run_imu(&args.log, args.compare.as_deref(), params, args.window)?;
    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })?;
        for (i, r) in reports.iter().enumerate() {
            write_file(&out.join(format!("series_{}.csv", i + 1)), &pipeline::format_series_csv(&r.series))?;
        }
        write_file(&out.join("windows.txt"), &pipeline::format_window_table(&reports))?;
    }
    print!("{}", pipeline::format_window_table(&reports));
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let summary = pipeline::run_bench(&BenchConfig {
        frames: args.frames,
        dets_per_frame: args.dets_per_frame,
        size: args.size,
        seed: args.seed,
        ..BenchConfig::default()
    })?;
    println!("{}", to_json(&summary));
    Ok(())
}

fn render(args: RenderArgs) -> Result<()> {
    let n = pipeline::run_render(&args.manifest, &args.fused, &args.out, args.alert.config())?;
    println!("rendered {n} frames into {}", args.out.display());
    Ok(())
}

fn split(args: SplitArgs) -> Result<()> {
    let ratios: Vec<f64> = args
        .ratios
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("invalid ratio `{s}`"))))
        .collect::<Result<_>>()?;
    let [a, b, c] = ratios[..] else {
        return Err(Error::Config("expected three ratios".into()));
    };
    let text = fs::read_to_string(&args.list).map_err(|e| Error::Io {
        path: args.list.clone(),
        source: e,
    })?;
    let ids: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let (train, val, test) = dataset::split_dataset(&ids, (a, b, c), args.seed)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    for (name, part) in [("train.txt", &train), ("val.txt", &val), ("test.txt", &test)] {
        let mut body = part.join("\n");
        body.push('\n');
        write_file(&args.out.join(name), &body)?;
    }
    println!("train {} / val {} / test {}", train.len(), val.len(), test.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Replay(a) => replay(a).map(|_| ExitCode::SUCCESS),
        Command::Eval(a) => evaluate(a),
        Command::Imu(a) => imu(a).map(|_| ExitCode::SUCCESS),
        Command::Bench(a) => bench(a).map(|_| ExitCode::SUCCESS),
        Command::Render(a) => render(a).map(|_| ExitCode::SUCCESS),
        Command::Split(a) => split(a).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
