use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use graspme::dataset::{
    read_coco, read_predictions, save_text, validate_coco, write_coco, write_predictions,
    CocoDataset, DatasetError, PredictionSet,
};
use graspme::metrics::{evaluate, random_baseline, EvalConfig};
use graspme::overlay::{draw_ground_truth, draw_predictions};
use graspme::pipeline::{generate_full, resolve_templates, split_coco, Family, PipelineError};
use graspme::scene::{GenerationConfig, SceneError};

/// Exit codes: 0 success, 1 usage, 2 validation/schema, 3 I/O.
enum AppError {
    Validation(String),
    Io(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Validation(_) => 2,
            AppError::Io(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            AppError::Validation(m) | AppError::Io(m) => m,
        }
    }
}

impl From<DatasetError> for AppError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(_) | DatasetError::Image(_) => AppError::Io(e.to_string()),
            _ => AppError::Validation(e.to_string()),
        }
    }
}

impl From<SceneError> for AppError {
    fn from(e: SceneError) -> Self {
        AppError::Validation(e.to_string())
    }
}

impl From<PipelineError> for AppError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Dataset(d) => d.into(),
            other => AppError::Validation(other.to_string()),
        }
    }
}

fn read_file(path: &Path) -> Result<String, AppError> {
    std::fs::read_to_string(path)
        .map_err(|e| AppError::Io(format!("{}: {e}", path.display())))
}

#[derive(Parser)]
#[command(name = "graspme", version, about = "Grasp-manifold dataset generator and benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Simple,
    Complex,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize scenes and write images plus COCO index files
    Generate {
        /// Randomization config JSON; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scenes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FamilyArg::Simple)]
        family: FamilyArg,
        /// Worker threads; falls back to GRASPME_JOBS, then all cores
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Score a prediction file against a ground-truth index
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// JSON report destination
        #[arg(long)]
        out: PathBuf,
        /// Evaluate all objects as one category
        #[arg(long)]
        merge_classes: bool,
        /// Manifold stroke width in pixels
        #[arg(long, default_value_t = 3)]
        stroke: u32,
        /// OKS kernel constant
        #[arg(long, default_value_t = 0.1)]
        kappa: f64,
    },
    /// Write the Random baseline's predictions
    Baseline {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample inside these predicted boxes instead of GT boxes
        #[arg(long)]
        boxes: Option<PathBuf>,
    },
    /// Render an annotation overlay for one image
    Inspect {
        /// Dataset directory produced by `generate`
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        /// Position in the split's image list
        #[arg(long)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        stroke: u32,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own exit code scheme is remapped: any usage problem is 1
            let _ = e.print();
            return if e.exit_code() == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Generate { config, out, scenes, seed, family, jobs } => {
            cmd_generate(config.as_deref(), &out, scenes, seed, family, jobs)
        }
        Command::Evaluate { gt, pred, out, merge_classes, stroke, kappa } => {
            cmd_evaluate(&gt, &pred, &out, merge_classes, stroke, kappa)
        }
        Command::Baseline { gt, out, seed, boxes } => {
            cmd_baseline(&gt, &out, seed, boxes.as_deref())
        }
        Command::Inspect { dataset, split, index, out, pred, stroke } => {
            cmd_inspect(&dataset, &split, index, &out, pred.as_deref(), stroke)
        }
    }
}

fn load_gt(path: &Path) -> Result<CocoDataset, AppError> {
    let gt = read_coco(&read_file(path)?)?;
    validate_coco(&gt)?;
    Ok(gt)
}

fn cmd_generate(
    config_path: Option<&Path>,
    out: &Path,
    scenes: u64,
    seed: u64,
    family: FamilyArg,
    jobs: Option<usize>,
) -> Result<(), AppError> {
    let config = match config_path {
        Some(path) => GenerationConfig::from_json(&read_file(path)?)?,
        None => GenerationConfig::default(),
    };
    let family = match family {
        FamilyArg::Simple => Family::Simple,
        FamilyArg::Complex => Family::Complex,
    };
    let templates = resolve_templates(family, &config)?;
    let jobs = jobs
        .or_else(|| std::env::var("GRASPME_JOBS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| AppError::Validation(e.to_string()))?;

    eprintln!("generating {scenes} scenes into {} ...", out.display());
    let start = Instant::now();
    let full = pool.install(|| generate_full(&config, &templates, scenes, seed, Some(out)))?;
    let (train, val, test) = split_coco(&full, scenes, seed)?;
    for (name, split) in [("train", &train), ("val", &val), ("test", &test)] {
        save_text(&out.join(format!("annotations_{name}.json")), &write_coco(split))?;
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "scenes={} annotations={} train={} val={} test={} elapsed={:.1}s rate={:.2} scenes/sec",
        scenes,
        full.annotations.len(),
        train.images.len(),
        val.images.len(),
        test.images.len(),
        elapsed,
        scenes as f64 / elapsed.max(1e-9),
    );
    Ok(())
}

fn cmd_evaluate(
    gt_path: &Path,
    pred_path: &Path,
    out: &Path,
    merge_classes: bool,
    stroke: u32,
    kappa: f64,
) -> Result<(), AppError> {
    let gt = load_gt(gt_path)?;
    let preds = read_predictions(&read_file(pred_path)?, &gt)?;
    let canvas = gt
        .images
        .first()
        .map(|i| (i.width, i.height))
        .unwrap_or((512, 512));
    let config = EvalConfig {
        merge_classes,
        stroke_px: stroke,
        oks_kappa: kappa,
        canvas,
        ..Default::default()
    };
    let report = evaluate(&gt, &preds, &config);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    save_text(out, &json)?;
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_baseline(
    gt_path: &Path,
    out: &Path,
    seed: u64,
    boxes: Option<&Path>,
) -> Result<(), AppError> {
    let gt = load_gt(gt_path)?;
    let boxes = match boxes {
        Some(path) => Some(read_predictions(&read_file(path)?, &gt)?),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let preds = random_baseline(&gt, &mut rng, boxes.as_ref());
    save_text(out, &write_predictions(&preds))?;
    println!("predictions={}", preds.records.len());
    Ok(())
}

fn cmd_inspect(
    dataset_dir: &Path,
    split: &str,
    index: usize,
    out: &Path,
    pred_path: Option<&Path>,
    stroke: u32,
) -> Result<(), AppError> {
    let gt = load_gt(&dataset_dir.join(format!("annotations_{split}.json")))?;
    let image = gt.images.get(index).ok_or_else(|| {
        AppError::Validation(format!(
            "index {index} out of range for split '{split}' with {} images",
            gt.images.len()
        ))
    })?;
    let rgb_path = dataset_dir.join("images").join(&image.file_name);
    let mut rgb = image::open(&rgb_path)
        .map_err(|e| AppError::Io(format!("{}: {e}", rgb_path.display())))?
        .into_rgb8();
    if (rgb.width(), rgb.height()) != (image.width, image.height) {
        return Err(AppError::Validation(format!(
            "{} is {}x{}, index says {}x{}",
            image.file_name,
            rgb.width(),
            rgb.height(),
            image.width,
            image.height
        )));
    }

    let anns: Vec<_> = gt
        .annotations
        .iter()
        .filter(|a| a.image_id == image.id)
        .collect();
    draw_ground_truth(&mut rgb, &gt, &anns, stroke);

    if let Some(path) = pred_path {
        let preds: PredictionSet = read_predictions(&read_file(path)?, &gt)?;
        let records: Vec<_> = preds
            .records
            .iter()
            .filter(|r| r.image_id == image.id)
            .collect();
        draw_predictions(&mut rgb, &gt, &records, stroke);
    }

    rgb.save(out)
        .map_err(|e| AppError::Io(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}
