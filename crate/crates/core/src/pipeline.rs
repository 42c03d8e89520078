//! End-to-end pipeline and the stage functions shared with the CLI.
//!
//! Every stage consumes what the previous stage's artifact decodes to, so
//! running the stages one by one from files reproduces the single-shot run
//! bit for bit.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::io::{
    decode_kitti, decode_rfp, decode_rri, decode_rwt, encode_kitti, encode_rfp, encode_rrf,
    encode_rri, encode_rwt, format_boxes, gen_synthetic_scene, parse_boxes, RawPlanes,
    SyntheticScene,
};
use crate::pointops::{
    bev_flatten, encode_keypoints, furthest_point_sampling, voxelize, BevMap, KeypointSet,
    VoxelGrid,
};
use crate::range_geometry::{build_range_image, redeem_feature_points, ProjectionStats};
use crate::rvfe::{basicblock_forward, hdmk_forward};
use crate::sgrid::{refine_head_forward, sgrid_pool, Refinement, RoIFeature};
use crate::types::{plane, Box3D, FeaturePointCloud, Point, RangeImage};
use crate::weights::ModelWeights;

/// Artifact file names inside the output directory.
pub mod artifact {
    pub const POINTS: &str = "points.bin";
    pub const BOXES: &str = "boxes.txt";
    pub const RANGE: &str = "range.rri";
    pub const WEIGHTS: &str = "weights.rwt";
    pub const BASICBLOCK: &str = "basicblock.rri";
    pub const HDMK: &str = "hdmk.rri";
    pub const REDEEMED: &str = "redeemed.rfp";
    pub const BEV: &str = "bev.rri";
    pub const KEYPOINTS: &str = "keypoints.rfp";
    pub const ROI: &str = "roi.rrf";
    pub const PREDICTIONS: &str = "predictions.txt";
    pub const SUMMARY: &str = "summary.txt";
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSource {
    /// KITTI velodyne `.bin`.
    Kitti(PathBuf),
    /// A five-plane RRI1 range image.
    RangeImage(PathBuf),
    /// Generated from the `synth.*` config keys.
    Synthetic,
}

impl InputSource {
    /// RRI1 files are recognized by their magic, anything else is read as KITTI.
    pub fn detect(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut magic = [0u8; 4];
        let is_rri = {
            use std::io::Read;
            let mut f = std::fs::File::open(&path)?;
            f.read(&mut magic)? == 4 && &magic == crate::io::formats::RRI_MAGIC
        };
        Ok(if is_rri {
            InputSource::RangeImage(path)
        } else {
            InputSource::Kitti(path)
        })
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

pub fn stage_synth(cfg: &PipelineConfig) -> Result<SyntheticScene> {
    gen_synthetic_scene(&cfg.synth, cfg.seed)
}

pub fn stage_project(cfg: &PipelineConfig, points: &[Point]) -> Result<(RangeImage, ProjectionStats)> {
    build_range_image(points, &cfg.sensor)
}

/// Outputs of the range-view feature extractor, already rounded to f32.
#[derive(Debug, Clone, PartialEq)]
pub struct Redeemed {
    pub basicblock: RangeImage,
    pub hdmk: RangeImage,
    pub cloud: FeaturePointCloud,
}

pub fn stage_redeem(cfg: &PipelineConfig, w: &ModelWeights, img: &RangeImage) -> Result<Redeemed> {
    if img.num_planes() != plane::BASE {
        return Err(Error::invalid(format!(
            "expected a {}-plane range image, got {} planes",
            plane::BASE,
            img.num_planes()
        )));
    }
    let boundary = cfg.rvfe.boundary;
    let basicblock = basicblock_forward(img, &w.basicblock, boundary)?.quantized_f32();
    let hdmk = hdmk_forward(&basicblock, &w.hdmk, boundary)?.quantized_f32();
    let cloud = redeem_feature_points(&hdmk, cfg.rvfe.d_f)?;
    Ok(Redeemed {
        basicblock,
        hdmk,
        cloud,
    })
}

/// Furthest point sampling followed by PointNet re-extraction.
pub fn stage_keypoints(
    cfg: &PipelineConfig,
    w: &ModelWeights,
    cloud: &FeaturePointCloud,
) -> Result<KeypointSet> {
    let kp = &cfg.keypoints;
    let picked = furthest_point_sampling(cloud, kp.count, kp.seed_index)?;
    encode_keypoints(&picked, cloud, kp.radius, kp.max_neighbors, &w.keypoint_mlp)
}

pub fn stage_voxelize(cfg: &PipelineConfig, cloud: &FeaturePointCloud) -> Result<(VoxelGrid, BevMap)> {
    let grid = voxelize(cloud, &cfg.voxel)?;
    let bev = bev_flatten(&grid);
    Ok((grid, bev))
}

pub fn stage_pool(
    cfg: &PipelineConfig,
    w: &ModelWeights,
    keypoints: &KeypointSet,
    boxes: &[Box3D],
) -> Result<(Vec<RoIFeature>, Vec<Refinement>)> {
    let rois = sgrid_pool(keypoints, boxes, &cfg.sgrid, &w.sgrid)?;
    let preds = rois
        .iter()
        .map(|r| refine_head_forward(r, &w.head))
        .collect::<Result<Vec<_>>>()?;
    Ok((rois, preds))
}

pub fn bev_planes(bev: &BevMap) -> RawPlanes {
    RawPlanes {
        height: bev.ny,
        width: bev.nx,
        planes: bev.channels,
        data: bev.data.iter().map(|&v| v as f32).collect(),
        mask: bev.occupied.clone(),
    }
}

/// One line per box: confidence, then the seven residuals.
pub fn format_predictions(preds: &[Refinement]) -> String {
    let mut out = String::new();
    for p in preds {
        let _ = write!(out, "{}", p.confidence);
        for r in p.residuals {
            let _ = write!(out, " {r}");
        }
        out.push('\n');
    }
    out
}

pub fn decode_image(cfg: &PipelineConfig, bytes: &[u8]) -> Result<RangeImage> {
    decode_rri(bytes)?.into_range_image(&cfg.sensor)
}

pub fn decode_keypoints(bytes: &[u8]) -> Result<KeypointSet> {
    Ok(KeypointSet::from_cloud(decode_rfp(bytes)?))
}

/// Loads weights from an RWT1 file, or initializes them from the seed.
pub fn load_weights(cfg: &PipelineConfig, path: Option<&Path>) -> Result<ModelWeights> {
    match path {
        Some(p) => ModelWeights::from_records(cfg, decode_rwt(&std::fs::read(p)?)?),
        None => ModelWeights::init(cfg, cfg.seed),
    }
}

pub fn encode_weights(w: &ModelWeights) -> Result<Vec<u8>> {
    encode_rwt(&w.to_records())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactInfo {
    pub name: &'static str,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineReport {
    pub points: usize,
    pub projection: Option<ProjectionStats>,
    pub valid_pixels: usize,
    pub redeemed_points: usize,
    pub keypoints: usize,
    pub voxels: usize,
    pub boxes: usize,
    pub timings_ms: Vec<(&'static str, f64)>,
    pub artifacts: Vec<ArtifactInfo>,
}

impl PipelineReport {
    pub fn checksum(&self, name: &str) -> Option<&str> {
        self.artifacts
            .iter()
            .find(|a| a.name == name)
            .map(|a| a.sha256.as_str())
    }

    fn render(&self, cfg: &PipelineConfig, input: &str, failure: Option<&Error>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "status: {}", if failure.is_some() { "failed" } else { "ok" });
        if let Some(e) = failure {
            if let Error::Stage { stage, source } = e {
                let _ = writeln!(s, "failed_stage: {stage}");
                let _ = writeln!(s, "error: {source}");
            } else {
                let _ = writeln!(s, "error: {e}");
            }
        }
        let _ = writeln!(s, "input: {input}");
        let _ = writeln!(s, "seed: {}", cfg.seed);
        let _ = writeln!(s, "sensor: {}x{}", cfg.sensor.height(), cfg.sensor.width());
        let _ = writeln!(s, "points: {}", self.points);
        if let Some(p) = &self.projection {
            let _ = writeln!(s, "in_fov: {}", p.in_fov);
            let _ = writeln!(s, "out_of_fov: {}", p.out_of_fov);
            let _ = writeln!(s, "zero_range: {}", p.zero_range);
            let _ = writeln!(s, "occluded: {}", p.occluded);
        }
        let _ = writeln!(s, "valid_pixels: {}", self.valid_pixels);
        let _ = writeln!(s, "redeemed_points: {}", self.redeemed_points);
        let _ = writeln!(s, "keypoints: {}", self.keypoints);
        let _ = writeln!(s, "voxels: {}", self.voxels);
        let _ = writeln!(s, "boxes: {}", self.boxes);
        for (name, ms) in &self.timings_ms {
            let _ = writeln!(s, "time_ms.{name}: {ms:.3}");
        }
        let tag = if failure.is_some() { " partial" } else { "" };
        for a in &self.artifacts {
            let _ = writeln!(s, "artifact: {} {} sha256={}{tag}", a.name, a.bytes, a.sha256);
        }
        s
    }
}

struct Writer<'a> {
    dir: &'a Path,
    report: PipelineReport,
}

impl Writer<'_> {
    fn put(&mut self, name: &'static str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.report.artifacts.push(ArtifactInfo {
            name,
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn timed<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = stage(name, f());
        self.report
            .timings_ms
            .push((name, t.elapsed().as_secs_f64() * 1e3));
        out
    }
}

/// Runs every stage and writes all artifacts plus `summary.txt` into `out_dir`.
///
/// Boxes come from `boxes` when given, else from the synthetic ground truth,
/// else none. On failure the summary names the stage and marks the artifacts
/// already written as partial.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    input: &InputSource,
    boxes: Option<&Path>,
    weights: Option<&Path>,
    out_dir: &Path,
) -> Result<PipelineReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut w = Writer {
        dir: out_dir,
        report: PipelineReport::default(),
    };
    let label = match input {
        InputSource::Kitti(p) => format!("kitti {}", p.display()),
        InputSource::RangeImage(p) => format!("rri {}", p.display()),
        InputSource::Synthetic => "synthetic".to_string(),
    };
    let result = run_stages(cfg, input, boxes, weights, &mut w);
    let failure = result.as_ref().err();
    let summary = w.report.render(cfg, &label, failure);
    std::fs::write(out_dir.join(artifact::SUMMARY), summary)?;
    result.map(|()| w.report)
}

fn run_stages(
    cfg: &PipelineConfig,
    input: &InputSource,
    boxes_path: Option<&Path>,
    weights_path: Option<&Path>,
    w: &mut Writer<'_>,
) -> Result<()> {
    let mut gt_boxes = Vec::new();
    let image = match input {
        InputSource::RangeImage(p) => w.timed("load", || {
            let bytes = std::fs::read(p)?;
            decode_image(cfg, &bytes)
        })?,
        _ => {
            let points = match input {
                InputSource::Synthetic => {
                    let scene = w.timed("synth", || stage_synth(cfg))?;
                    let bytes = encode_kitti(scene.cloud.points());
                    w.put(artifact::POINTS, &bytes)?;
                    let text = format_boxes(&scene.boxes);
                    w.put(artifact::BOXES, text.as_bytes())?;
                    gt_boxes = stage("synth", parse_boxes(&text))?;
                    stage("synth", decode_kitti(&bytes))?
                }
                InputSource::Kitti(p) => w.timed("load", || decode_kitti(&std::fs::read(p)?))?,
                InputSource::RangeImage(_) => unreachable!(),
            };
            w.report.points = points.len();
            let (img, stats) = w.timed("project", || stage_project(cfg, &points))?;
            w.report.projection = Some(stats);
            let bytes = stage("project", encode_rri(&RawPlanes::from_image(&img)))?;
            w.put(artifact::RANGE, &bytes)?;
            stage("project", decode_image(cfg, &bytes))?
        }
    };
    w.report.valid_pixels = image.valid_count();

    let weights = w.timed("weights", || load_weights(cfg, weights_path))?;
    let bytes = stage("weights", encode_weights(&weights))?;
    w.put(artifact::WEIGHTS, &bytes)?;

    let red = w.timed("redeem", || stage_redeem(cfg, &weights, &image))?;
    let bb = stage("redeem", encode_rri(&RawPlanes::from_image(&red.basicblock)))?;
    w.put(artifact::BASICBLOCK, &bb)?;
    let hd = stage("redeem", encode_rri(&RawPlanes::from_image(&red.hdmk)))?;
    w.put(artifact::HDMK, &hd)?;
    let rf = stage("redeem", encode_rfp(&red.cloud))?;
    w.put(artifact::REDEEMED, &rf)?;
    let cloud = stage("redeem", decode_rfp(&rf))?;
    w.report.redeemed_points = cloud.len();

    let (grid, bev) = w.timed("voxelize", || stage_voxelize(cfg, &cloud))?;
    w.report.voxels = grid.voxels.len();
    let bytes = stage("voxelize", encode_rri(&bev_planes(&bev)))?;
    w.put(artifact::BEV, &bytes)?;

    let kps = w.timed("fps", || stage_keypoints(cfg, &weights, &cloud))?;
    let bytes = stage("fps", encode_rfp(&kps.cloud))?;
    w.put(artifact::KEYPOINTS, &bytes)?;
    let kps = stage("fps", decode_keypoints(&bytes))?;
    w.report.keypoints = kps.len();

    let boxes = match boxes_path {
        Some(p) => stage("pool", crate::io::read_boxes(p))?,
        None => gt_boxes,
    };
    w.report.boxes = boxes.len();
    let (rois, preds) = w.timed("pool", || stage_pool(cfg, &weights, &kps, &boxes))?;
    let bytes = stage("pool", encode_rrf(&rois, cfg.sgrid.feature_len()))?;
    w.put(artifact::ROI, &bytes)?;
    w.put(artifact::PREDICTIONS, format_predictions(&preds).as_bytes())?;
    Ok(())
}
