use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rangeview::io::{
    decode_kitti, decode_rfp, encode_kitti, encode_rfp, encode_rrf, encode_rri, format_boxes,
    read_boxes, RawPlanes,
};
use rangeview::pipeline::{
    artifact, bev_planes, decode_image, decode_keypoints, format_predictions, load_weights,
    run_pipeline, stage_keypoints, stage_pool, stage_project, stage_redeem, stage_synth,
    stage_voxelize, InputSource,
};
use rangeview::rvfe::gradcheck::{
    check_hdmk_gradients, random_instance, DEFAULT_STEP, DEFAULT_TOLERANCE,
};
use rangeview::rvfe::HorizontalBoundary;
use rangeview::{load_config, PipelineConfig};

#[derive(Parser)]
#[command(name = "rangeview", version, about = "Range-view LiDAR detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the `seed` config key.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct WithWeights {
    /// RWT1 weights; initialized from the seed when absent.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene: points.bin and boxes.txt.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Project a KITTI scan into range.rri.
    Project {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// BasicBlock, meta kernel and point redemption: basicblock.rri, hdmk.rri, redeemed.rfp.
    Redeem {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        weights: WithWeights,
        #[arg(long)]
        input: PathBuf,
    },
    /// Furthest point sampling and keypoint encoding: keypoints.rfp.
    Fps {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        weights: WithWeights,
        #[arg(long)]
        input: PathBuf,
    },
    /// Voxelization and BEV flattening: bev.rri.
    Voxelize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// RoI grid pooling and refinement: roi.rrf and predictions.txt.
    Pool {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        weights: WithWeights,
        /// Keypoints (RFP1).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        boxes: PathBuf,
    },
    /// Finite-difference check of the meta-kernel gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        height: usize,
        #[arg(long, default_value_t = 10)]
        width: usize,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Run every stage and write all artifacts plus summary.txt.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        weights: WithWeights,
        /// KITTI scan or RRI1 image; a synthetic scene when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        boxes: Option<PathBuf>,
    },
}

fn setup(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = load_config(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))?;
    Ok(cfg)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("RR_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("RR_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            bail!("RR_THREADS must be a positive integer, got `{v}`");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(())
}

fn gradcheck(seed: u64, h: usize, w: usize, tol: f64) -> Result<bool> {
    let mut ok = true;
    for boundary in [HorizontalBoundary::Wrap, HorizontalBoundary::Zero] {
        let (feat, params, upstream) = random_instance(seed, h, w, 4, 8, 8)?;
        let reports = check_hdmk_gradients(&feat, &params, boundary, &upstream, DEFAULT_STEP)?;
        for r in &reports {
            let pass = r.passed(tol);
            ok &= pass;
            println!(
                "{} {boundary:?} {:<40} entries={:<5} max_rel_error={:.3e}",
                if pass { "PASS" } else { "FAIL" },
                r.name,
                r.entries,
                r.max_rel_error
            );
        }
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    init_threads()?;
    match cli.command {
        Command::Synth { common } => {
            let cfg = setup(&common)?;
            let scene = stage_synth(&cfg)?;
            write(&common.out, artifact::POINTS, &encode_kitti(scene.cloud.points()))?;
            write(&common.out, artifact::BOXES, format_boxes(&scene.boxes).as_bytes())?;
            println!(
                "{} points ({} on {} boxes)",
                scene.cloud.len(),
                scene.foreground_count(),
                scene.boxes.len()
            );
        }
        Command::Project { common, input } => {
            let cfg = setup(&common)?;
            let points = decode_kitti(&read(&input)?)?;
            let (img, stats) = stage_project(&cfg, &points)?;
            write(&common.out, artifact::RANGE, &encode_rri(&RawPlanes::from_image(&img))?)?;
            println!("{stats:?}");
        }
        Command::Redeem {
            common,
            weights,
            input,
        } => {
            let cfg = setup(&common)?;
            let w = load_weights(&cfg, weights.weights.as_deref())?;
            let img = decode_image(&cfg, &read(&input)?)?;
            let red = stage_redeem(&cfg, &w, &img)?;
            write(
                &common.out,
                artifact::BASICBLOCK,
                &encode_rri(&RawPlanes::from_image(&red.basicblock))?,
            )?;
            write(&common.out, artifact::HDMK, &encode_rri(&RawPlanes::from_image(&red.hdmk))?)?;
            write(&common.out, artifact::REDEEMED, &encode_rfp(&red.cloud)?)?;
            println!(
                "{} redeemed points from {} valid pixels",
                red.cloud.len(),
                img.valid_count()
            );
        }
        Command::Fps {
            common,
            weights,
            input,
        } => {
            let cfg = setup(&common)?;
            let w = load_weights(&cfg, weights.weights.as_deref())?;
            let cloud = decode_rfp(&read(&input)?)?;
            let kps = stage_keypoints(&cfg, &w, &cloud)?;
            write(&common.out, artifact::KEYPOINTS, &encode_rfp(&kps.cloud)?)?;
            println!("{} keypoints", kps.len());
        }
        Command::Voxelize { common, input } => {
            let cfg = setup(&common)?;
            let cloud = decode_rfp(&read(&input)?)?;
            let (grid, bev) = stage_voxelize(&cfg, &cloud)?;
            write(&common.out, artifact::BEV, &encode_rri(&bev_planes(&bev))?)?;
            println!(
                "{} voxels, {} points in range, {} outside",
                grid.voxels.len(),
                grid.in_range,
                grid.out_of_range
            );
        }
        Command::Pool {
            common,
            weights,
            input,
            boxes,
        } => {
            let cfg = setup(&common)?;
            let w = load_weights(&cfg, weights.weights.as_deref())?;
            let kps = decode_keypoints(&read(&input)?)?;
            let boxes = read_boxes(&boxes)?;
            let (rois, preds) = stage_pool(&cfg, &w, &kps, &boxes)?;
            write(&common.out, artifact::ROI, &encode_rrf(&rois, cfg.sgrid.feature_len())?)?;
            write(&common.out, artifact::PREDICTIONS, format_predictions(&preds).as_bytes())?;
            println!("{} boxes pooled", rois.len());
        }
        Command::Gradcheck {
            seed,
            height,
            width,
            tolerance,
        } => return gradcheck(seed, height, width, tolerance),
        Command::Pipeline {
            common,
            weights,
            input,
            boxes,
        } => {
            let cfg = setup(&common)?;
            let source = match input {
                Some(p) => InputSource::detect(p)?,
                None => InputSource::Synthetic,
            };
            let result = run_pipeline(
                &cfg,
                &source,
                boxes.as_deref(),
                weights.weights.as_deref(),
                &common.out,
            );
            let summary = std::fs::read_to_string(common.out.join(artifact::SUMMARY))
                .unwrap_or_default();
            print!("{summary}");
            result?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
