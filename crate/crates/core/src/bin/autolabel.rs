//! Command-line front end. Each subcommand reads and writes the formats
//! documented in `autolabel::io`; failures print one JSON object on stderr
//! and exit nonzero.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use autolabel::config::Config;
use autolabel::error::{Error, Result};
use autolabel::eval::evaluate;
use autolabel::io::{load_cloud, load_dataset, load_labels, save_cloud, write_sidecar};
use autolabel::lift::lift_frame;
use autolabel::pipeline::{
    detector_for, fuse_by_frame, lidar_labels, run_pipeline, score_frame, self_paced_data, with_workers, write_labels,
    write_metrics, write_rounds, write_run, Provenance,
};
use autolabel::selfpace::run_self_paced;
use autolabel::synth::{generate, write_scene, SceneSpec, Split};

#[derive(Parser)]
#[command(name = "autolabel", version, about = "Multi-traversal 3D auto-labeling")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; falls back to $AUTOLABEL_CONFIG, then defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set cluster.alpha=0.6`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set run.seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Shorthand for `--set run.workers=N` (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-traversal dataset.
    Synth {
        /// Scene spec TOML; defaults when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        frames: Option<usize>,
        /// Trailing frames held out for evaluation.
        #[arg(long)]
        eval_frames: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the current traversal of every frame; writes `fNNNN.csv`.
    Ppscore {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster scored clouds (`fNNNN.csv`) into fitted LiDAR labels.
    Cluster {
        #[arg(required = true)]
        scored: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lift every frame's masks into image labels.
    Lift {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge LiDAR and image labels frame by frame.
    Fuse {
        #[arg(long)]
        lidar: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Shorthand for `--set fusion.d_min=X`.
        #[arg(long)]
        d_min: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seed training plus self-training rounds on fused labels.
    Selfpace {
        #[arg(long)]
        manifest: PathBuf,
        /// Fused labels; only training-split frames are used.
        #[arg(long)]
        labels: PathBuf,
        /// Shorthand for `--set run.detector=NAME`.
        #[arg(long)]
        detector: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// The whole chain on one dataset.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common, extra: Vec<String>) -> Result<Config> {
    let mut overrides = common.overrides.clone();
    overrides.extend(common.seed.map(|s| format!("run.seed={s}")));
    overrides.extend(common.workers.map(|w| format!("run.workers={w}")));
    overrides.extend(extra);
    let config = Config::load(common.config.as_deref(), &overrides)?;
    log::info!("merged config:\n{}", config.to_toml());
    Ok(config)
}

/// `f0042.csv` -> 42.
fn frame_of(path: &Path) -> Result<u32> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix('f'))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Validation(format!("{}: expected a file named fNNNN.csv", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    let extra = match &cli.command {
        Command::Fuse { d_min: Some(d), .. } => vec![format!("fusion.d_min={d}")],
        Command::Selfpace { detector: Some(d), .. } => vec![format!("run.detector={d}")],
        _ => vec![],
    };
    let config = load_config(&cli.common, extra)?;
    with_workers(config.run.workers, || execute(cli.command, &config))?
}

fn execute(command: Command, config: &Config) -> Result<()> {
    match command {
        Command::Synth {
            spec,
            frames,
            eval_frames,
            out,
        } => {
            let mut spec = match spec {
                Some(p) => {
                    let text =
                        std::fs::read_to_string(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                    toml::from_str::<SceneSpec>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
                }
                None => SceneSpec::default(),
            };
            spec.seed = config.run.seed;
            if let Some(n) = frames {
                spec.frames = n;
                spec.eval_frames = spec.eval_frames.min(n);
            }
            if let Some(n) = eval_frames {
                spec.eval_frames = n;
            }
            let manifest = write_scene(&generate(&spec)?, &out)?;
            log::info!("wrote {}", manifest.display());
        }
        Command::Ppscore { manifest, out } => {
            let dataset = load_dataset(&manifest)?;
            for frame in &dataset.frames {
                let path = out.join(format!("f{:04}.csv", frame.id));
                save_cloud(&path, &score_frame(frame, &config.persistency)?)?;
                write_sidecar(&path, &Provenance { config })?;
            }
        }
        Command::Cluster { scored, out } => {
            let mut labels = BTreeMap::new();
            for path in &scored {
                let frame = frame_of(path)?;
                let cloud = load_cloud(path)?;
                if cloud.scores.is_none() {
                    return Err(Error::Validation(format!(
                        "{}: cloud has no score column",
                        path.display()
                    )));
                }
                labels.insert(frame, lidar_labels(&cloud, &config.cluster, &config.boxfit, frame)?);
            }
            write_labels(&out, &labels.into_values().flatten().collect::<Vec<_>>(), config)?;
        }
        Command::Lift { manifest, out } => {
            let dataset = load_dataset(&manifest)?;
            let mut labels = Vec::new();
            for f in &dataset.frames {
                labels.extend(lift_frame(
                    &f.scans[0].cloud,
                    &f.camera,
                    &f.masks,
                    &config.lift,
                    &config.boxfit,
                    f.id,
                )?);
            }
            write_labels(&out, &labels, config)?;
        }
        Command::Fuse { lidar, image, out, .. } => {
            let fused = fuse_by_frame(&load_labels(&lidar)?, &load_labels(&image)?, &config.fusion)?;
            write_labels(&out, &fused, config)?;
        }
        Command::Selfpace {
            manifest, labels, out, ..
        } => {
            let dataset = load_dataset(&manifest)?;
            let train = dataset.frame_ids(Split::Train);
            let seed: Vec<_> = load_labels(&labels)?
                .into_iter()
                .filter(|l| train.contains(&l.frame))
                .collect();
            let data = self_paced_data(&dataset, seed)?;
            let detector = detector_for(config);
            let run = run_self_paced(
                &data,
                detector.as_ref(),
                &config.selfpace,
                &config.groups,
                &config.eval,
                config.run.seed,
            )?;
            write_rounds(&out, &run, detector.name(), config)?;
        }
        Command::Eval { pred, gt, out } => {
            let report = evaluate(&load_labels(&pred)?, &load_labels(&gt)?, &config.eval)?;
            write_metrics(&out, &report, config)?;
        }
        Command::Run { manifest, out } => {
            let dataset = load_dataset(&manifest)?;
            write_run(&out, &run_pipeline(&dataset, config)?, config)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{report}");
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}
