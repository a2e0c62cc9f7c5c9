use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use lanewatch::features::{fisher_score, FeatureVector, FEATURE_DIM};
use lanewatch::geometry::parse_lane_config;
use lanewatch::pipeline::{
    ingest, run, Detector, DetectorConfig, Frame, PgmDirReader, RawFrameReader, ReportWriter,
    RunError, StreamError, UpdatePolicy,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_STREAM: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Lane-block vehicle detection and queue length reporting for grayscale
/// traffic video.
#[derive(Parser, Debug)]
#[command(name = "lanewatch", version)]
struct Args {
    /// Lane configuration file.
    #[arg(long, env = "LANEWATCH_CONFIG", required_unless_present = "fisher")]
    config: Option<PathBuf>,

    /// Frame source: a directory of .pgm files, a raw Y-plane file, or `-`
    /// for raw frames on stdin.
    #[arg(long, required_unless_present = "fisher")]
    input: Option<PathBuf>,

    /// Where to write report lines (default stdout).
    #[arg(long)]
    output: Option<PathBuf>,

    #[arg(long, default_value_t = 352)]
    width: u32,

    #[arg(long, default_value_t = 288)]
    height: u32,

    #[arg(long, default_value_t = 25)]
    source_fps: u32,

    #[arg(long, default_value_t = 5)]
    target_fps: u32,

    /// Block samples collected before the first model fit.
    #[arg(long, default_value_t = 2000)]
    init_samples: usize,

    /// Forgetting factor of the online update.
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Only feed samples with |f(x)| above this margin to the online update.
    #[arg(long)]
    update_margin: Option<f64>,

    /// Fit one model per lane instead of a shared one.
    #[arg(long)]
    per_lane_models: bool,

    /// Write the learning state here when the run ends.
    #[arg(long)]
    snapshot_out: Option<PathBuf>,

    /// Resume from a snapshot; input frames are numbered from where it left off.
    #[arg(long)]
    snapshot_in: Option<PathBuf>,

    /// Write every block's feature vector as CSV.
    #[arg(long)]
    dump_features: Option<PathBuf>,

    /// Rank features by Fisher's criterion between two CSV sample files.
    #[arg(long, num_args = 2, value_names = ["A.csv", "B.csv"])]
    fisher: Option<Vec<PathBuf>>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = match e {
            RunError::Stream(_) => EXIT_STREAM,
            _ => EXIT_RUNTIME,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match &args.fisher {
        Some(files) => fisher_ranking(&files[0], &files[1]),
        None => detect(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("lanewatch: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn detect(args: &Args) -> Result<(), Failure> {
    let config_path = args.config.as_deref().expect("required by clap");
    let input = args.input.as_deref().expect("required by clap");
    let text = fs::read_to_string(config_path)
        .map_err(|e| Failure::config(format!("{}: {e}", config_path.display())))?;
    let lanes = parse_lane_config(&text, args.width, args.height)
        .map_err(|e| Failure::config(format!("{}: {e}", config_path.display())))?;
    if !(args.lambda > 0.0 && args.lambda < 1.0) {
        return Err(Failure::config("--lambda must lie in (0, 1)"));
    }

    let config = DetectorConfig {
        frame_width: args.width,
        frame_height: args.height,
        init_samples: args.init_samples,
        lambda: args.lambda,
        seed: args.seed,
        update_policy: args.update_margin.map_or(UpdatePolicy::All, UpdatePolicy::Margin),
        per_lane_models: args.per_lane_models,
        ..DetectorConfig::default()
    };
    let mut detector = match &args.snapshot_in {
        Some(path) => {
            let snap = fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            Detector::restore(config, lanes, &snap)
        }
        None => Detector::new(config, lanes),
    }
    .map_err(|e| Failure::config(e.to_string()))?;

    let start = detector.next_sequence();
    let frames: Box<dyn Iterator<Item = Result<Frame, StreamError>>> = if input.is_dir() {
        let reader = PgmDirReader::open(input, args.width, args.height, args.source_fps)
            .map_err(|e| Failure {
                code: EXIT_STREAM,
                message: e.to_string(),
            })?;
        Box::new(reader.starting_at(start))
    } else {
        let source: Box<dyn Read> = if input == Path::new("-") {
            Box::new(io::stdin().lock())
        } else {
            Box::new(File::open(input).map_err(|e| Failure {
                code: EXIT_STREAM,
                message: format!("{}: {e}", input.display()),
            })?)
        };
        let reader = RawFrameReader::new(io::BufReader::new(source), args.width, args.height, args.source_fps);
        Box::new(reader.starting_at(start))
    };
    let frames = ingest(frames, args.source_fps, args.target_fps).map_err(|e| Failure::config(e.to_string()))?;

    let sink: Box<dyn Write> = match &args.output {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    let mut reports = ReportWriter::new(sink);
    let mut dump = match &args.dump_features {
        Some(path) => {
            let mut f = BufWriter::new(
                File::create(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?,
            );
            let names: Vec<&str> = FeatureVector::NAMES.iter().map(|(s, _)| *s).collect();
            writeln!(f, "# sequence,lane,block,{}", names.join(","))
                .map_err(|e| Failure::runtime(e.to_string()))?;
            Some(f)
        }
        None => None,
    };

    let outcome = run(
        &mut detector,
        frames,
        &mut reports,
        dump.as_mut().map(|f| f as &mut dyn Write),
    );
    if let Some(f) = dump.as_mut() {
        f.flush().map_err(|e| Failure::runtime(e.to_string()))?;
    }
    if let Some(path) = &args.snapshot_out {
        fs::write(path, detector.snapshot())
            .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    }
    let summary = outcome?;
    for failure in &summary.init_failures {
        eprintln!("lanewatch: {failure}");
    }
    Ok(())
}

fn read_samples(path: &Path) -> Result<Vec<FeatureVector>, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < FEATURE_DIM {
            return Err(Failure::config(format!(
                "{}:{}: need at least {FEATURE_DIM} fields",
                path.display(),
                i + 1
            )));
        }
        let tail = fields[fields.len() - FEATURE_DIM..].join(",");
        let fv = tail
            .parse::<FeatureVector>()
            .map_err(|e| Failure::config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(fv);
    }
    Ok(out)
}

fn fisher_ranking(a: &Path, b: &Path) -> Result<(), Failure> {
    let (a, b) = (read_samples(a)?, read_samples(b)?);
    let mut rows = Vec::with_capacity(FEATURE_DIM);
    for d in 0..FEATURE_DIM {
        let xa: Vec<f64> = a.iter().map(|f| f[d]).collect();
        let xb: Vec<f64> = b.iter().map(|f| f[d]).collect();
        let score = match fisher_score(&xa, &xb) {
            Ok(j) => Some(j),
            Err(lanewatch::features::FeatureError::TooFewSamples(..)) => {
                return Err(Failure::config("each sample file needs at least 2 rows"))
            }
            Err(_) => None,
        };
        rows.push((d, score));
    }
    rows.sort_by(|x, y| {
        let key = |s: Option<f64>| s.unwrap_or(f64::NEG_INFINITY);
        key(y.1).total_cmp(&key(x.1)).then(x.0.cmp(&y.0))
    });
    let mut out = io::stdout().lock();
    let w = |e: io::Error| Failure::runtime(e.to_string());
    writeln!(out, "{:<5} {:<7} {:<26} J", "rank", "symbol", "meaning").map_err(w)?;
    for (rank, (d, score)) in rows.iter().enumerate() {
        let (symbol, meaning) = FeatureVector::NAMES[*d];
        let j = score.map_or_else(|| "n/a".to_string(), |j| format!("{j:.4}"));
        writeln!(out, "{:<5} {:<7} {:<26} {}", rank + 1, symbol, meaning, j).map_err(w)?;
    }
    Ok(())
}
