use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use probdet::io::{self, DetectionCache, DetectionSequence};
use probdet::{report, sweep, Error, Execution, MergeConfig, MergeStrategy, Result};

/// Ensemble fusion, post-processing and PDQ evaluation for probabilistic detections.
#[derive(Parser)]
#[command(name = "probdet", version)]
struct Cli {
    /// Worker threads for frame and grid loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Score detections against ground truth.
    Evaluate {
        #[arg(long, num_args = 1.., required = true)]
        detections: Vec<PathBuf>,
        #[arg(long)]
        ground_truth: PathBuf,
        /// Run the post-processing pipeline before scoring.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Every ground-truth frame must have a detection frame.
        #[arg(long)]
        strict: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Fuse detection sources per frame.
    Merge {
        #[arg(long, num_args = 1.., required = true)]
        detections: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value = "most_confident")]
        strategy: MergeStrategy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full post-processing pipeline.
    Pipeline {
        #[arg(long, num_args = 1.., required = true)]
        detections: Vec<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate every point of a hyperparameter grid over a detection cache.
    Sweep {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Store raw detections in a cache directory for sweeps.
    Cache {
        #[arg(long, num_args = 1.., required = true)]
        detections: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<DetectionSequence>> {
    paths
        .iter()
        .map(|p| io::load_detections(p).map(|l| l.value))
        .collect()
}

fn merged_sequence(seqs: &[DetectionSequence], frames: Vec<probdet::DetectionFrame>) -> DetectionSequence {
    DetectionSequence {
        num_classes: seqs[0].num_classes,
        class_names: seqs.iter().find_map(|s| s.class_names.clone()),
        frames,
    }
}

fn run(cli: Cli) -> Result<()> {
    let exec = match cli.threads {
        Some(n) => Execution::Threads(n),
        None => Execution::default(),
    };
    match cli.command {
        Command::Evaluate {
            detections,
            ground_truth,
            config,
            strict,
            format,
        } => {
            let seqs = load_all(&detections)?;
            let gt = io::load_ground_truth(&ground_truth)?.value;
            if let Some(s) = seqs.iter().find(|s| s.num_classes != gt.num_classes()) {
                return Err(Error::LabelLengthMismatch {
                    expected: gt.num_classes(),
                    found: s.num_classes,
                });
            }
            let sources = io::group_sources(&seqs)?;
            let det_frames = match config {
                Some(path) => probdet::run_pipeline_with(&sources, &io::load_config(path)?, exec)?,
                None => sources.iter().map(|f| f.flattened()).collect(),
            };
            let frames = io::build_frames(&det_frames, &gt, strict)?;
            let summary = probdet::evaluate_sequence_with(&frames, exec);
            let text = match format {
                Format::Text => report::summary_text(&summary),
                Format::Csv => report::summary_csv(&summary),
                Format::Json => serde_json::to_string_pretty(&summary).expect("serializable summary") + "\n",
            };
            print!("{text}");
        }
        Command::Merge {
            detections,
            lambda,
            strategy,
            out,
        } => {
            let merge = MergeConfig::new(lambda, strategy)?;
            let seqs = load_all(&detections)?;
            let sources = io::group_sources(&seqs)?;
            let frames = exec.try_map(&sources, |f| {
                Ok::<_, Error>(probdet::DetectionFrame {
                    frame_id: f.frame_id,
                    image_width: f.image_width,
                    image_height: f.image_height,
                    detections: probdet::merge_ensemble(&f.sources, &merge)?,
                })
            })?;
            io::save_detections(&out, &merged_sequence(&seqs, frames))?;
        }
        Command::Pipeline {
            detections,
            config,
            out,
        } => {
            let config = io::load_config(config)?;
            let seqs = load_all(&detections)?;
            let sources = io::group_sources(&seqs)?;
            let frames = probdet::run_pipeline_with(&sources, &config, exec)?;
            io::save_detections(&out, &merged_sequence(&seqs, frames))?;
        }
        Command::Sweep {
            cache,
            ground_truth,
            grid,
            out,
            format,
        } => {
            let grid = io::load_grid(grid)?;
            let cache = DetectionCache::open(cache)?;
            let gt = io::load_ground_truth(&ground_truth)?.value;
            let result = sweep::run_sweep_cached(&cache, &gt, &grid, exec)?;
            let text = match format {
                Format::Csv => report::sweep_csv(&result),
                Format::Text => report::sweep_text(&result),
                Format::Json => serde_json::to_string_pretty(&result).expect("serializable result") + "\n",
            };
            io::write_atomic(&out, text.as_bytes())?;
            log::info!("{} grid points, best row {}", result.rows.len(), result.best);
        }
        Command::Cache { detections, out } => {
            let seqs = load_all(&detections)?;
            let sources = io::group_sources(&seqs)?;
            let class_names = seqs.iter().find_map(|s| s.class_names.clone());
            let k = seqs[0].num_classes;
            let cache = io::cache_detections(&sources, k, class_names, &out)?;
            log::info!("cached {} frames from {} sources", cache.frames.len(), cache.source_ids.len());
        }
    }
    Ok(())
}

fn report_error(kind: &str, message: &str) {
    let doc = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{doc}");
}

fn ensure_parent(path: &Path) -> bool {
    path.parent().is_none_or(|p| p.as_os_str().is_empty() || p.is_dir())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error("usage", e.to_string().trim_end());
            return ExitCode::from(2);
        }
    };
    if let Command::Merge { out, .. } | Command::Pipeline { out, .. } | Command::Sweep { out, .. } = &cli.command {
        if !ensure_parent(out) {
            report_error("io", &format!("{}: output directory does not exist", out.display()));
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
