//! Pipeline configuration.
//!
//! The file format is line-oriented `key = value` with `#` comments and
//! dotted section keys. Angles may be given in radians (`sensor.f_up`) or in
//! degrees with a `_deg` suffix (`sensor.f_up_deg`), never both. Unknown or
//! duplicated keys are rejected. The full key list lives in the README.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::synth::SynthSpec;
use crate::pointops::VoxelSpec;
use crate::rvfe::HorizontalBoundary;
use crate::sgrid::{Radius, SGridConfig, Upsample};
use crate::types::SensorModel;

#[derive(Debug, Clone, PartialEq)]
pub struct RvfeConfig {
    /// BasicBlock output width.
    pub c_in: usize,
    /// Hidden width of the meta-kernel weight MLPs.
    pub c_mid: usize,
    /// Redeemed embedding width (meta-kernel output).
    pub d_f: usize,
    pub boundary: HorizontalBoundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointConfig {
    /// Number of furthest-point samples `C`.
    pub count: usize,
    pub seed_index: usize,
    /// Ball radius for the PointNet re-extraction around each keypoint.
    pub radius: f64,
    pub max_neighbors: usize,
    /// Keypoint feature width after re-extraction.
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub sensor: SensorModel,
    pub rvfe: RvfeConfig,
    pub keypoints: KeypointConfig,
    pub voxel: VoxelSpec,
    pub sgrid: SGridConfig,
    pub head: HeadConfig,
    pub synth: SynthSpec,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let mut entries = Entries::parse(text)?;
    let cfg = build(&mut entries)?;
    entries.reject_unused()?;
    cfg.validate()?;
    Ok(cfg)
}

impl PipelineConfig {
    /// Re-checks every invariant, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        positive("rvfe.c_in", self.rvfe.c_in)?;
        positive("rvfe.c_mid", self.rvfe.c_mid)?;
        positive("rvfe.d_f", self.rvfe.d_f)?;
        if !self.rvfe.d_f.is_multiple_of(2) {
            return Err(Error::config("rvfe.d_f", "must be even (two equal branches)"));
        }
        positive("keypoints.count", self.keypoints.count)?;
        positive("keypoints.max_neighbors", self.keypoints.max_neighbors)?;
        positive("keypoints.channels", self.keypoints.channels)?;
        if !(self.keypoints.radius.is_finite() && self.keypoints.radius > 0.0) {
            return Err(Error::config("keypoints.radius", "must be strictly positive"));
        }
        for (axis, name) in ["x", "y", "z"].iter().enumerate() {
            let size = self.voxel.size[axis];
            if !(size.is_finite() && size > 0.0) {
                return Err(Error::config(
                    format!("voxel.size_{name}"),
                    "must be strictly positive",
                ));
            }
            // false for NaN bounds too
            let ordered = self.voxel.min[axis] < self.voxel.max[axis];
            if !ordered {
                return Err(Error::config(
                    format!("voxel.max_{name}"),
                    "must exceed the matching voxel.min",
                ));
            }
        }
        positive("sgrid.fine_grid", self.sgrid.fine_grid)?;
        positive("sgrid.coarse_grid", self.sgrid.coarse_grid)?;
        positive("sgrid.max_neighbors", self.sgrid.max_neighbors)?;
        positive("sgrid.fine_channels", self.sgrid.fine_channels)?;
        positive("sgrid.coarse_channels", self.sgrid.coarse_channels)?;
        for (key, r) in [
            ("sgrid.radius_fine", self.sgrid.radius_fine),
            ("sgrid.radius_coarse", self.sgrid.radius_coarse),
        ] {
            if let Radius::Fixed(v) = r {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::config(key, "must be strictly positive or `auto`"));
                }
            }
        }
        positive("head.hidden", self.head.hidden)?;
        positive("synth.points_per_box", self.synth.points_per_box)?;
        positive("synth.ground_points", self.synth.ground_points)?;
        if !(self.synth.extent.is_finite() && self.synth.extent > 0.0) {
            return Err(Error::config("synth.extent", "must be strictly positive"));
        }
        Ok(())
    }
}

fn positive(key: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::config(key, "must be positive"))
    } else {
        Ok(())
    }
}

fn build(e: &mut Entries) -> Result<PipelineConfig> {
    let height: usize = e.required("sensor.height")?;
    let width: usize = e.required("sensor.width")?;
    let f_up = e.angle("sensor.f_up")?;
    let f_down = e.angle("sensor.f_down")?;
    if f_up < 0.0 {
        return Err(Error::config(e.angle_key("sensor.f_up"), "f_up must be nonnegative"));
    }
    if f_down < 0.0 {
        return Err(Error::config(
            e.angle_key("sensor.f_down"),
            "f_down must be nonnegative",
        ));
    }
    let sensor = SensorModel::new(height, width, f_up, f_down).map_err(|err| match err {
        Error::InvalidArgument(msg) => {
            let key = if msg.contains("height") {
                "sensor.height"
            } else if msg.contains("width") {
                "sensor.width"
            } else {
                "sensor.f_up"
            };
            Error::config(key, msg)
        }
        other => other,
    })?;

    let wrap: bool = e.optional("rvfe.wrap", true)?;
    let rvfe = RvfeConfig {
        c_in: e.optional("rvfe.c_in", 32)?,
        c_mid: e.optional("rvfe.c_mid", 32)?,
        d_f: e.optional("rvfe.d_f", 64)?,
        boundary: if wrap {
            HorizontalBoundary::Wrap
        } else {
            HorizontalBoundary::Zero
        },
    };

    let keypoints = KeypointConfig {
        count: e.optional("keypoints.count", 2048)?,
        seed_index: e.optional("keypoints.seed_index", 0)?,
        radius: e.optional("keypoints.radius", 0.8)?,
        max_neighbors: e.optional("keypoints.max_neighbors", 16)?,
        channels: e.optional("keypoints.channels", 32)?,
    };

    let voxel = VoxelSpec {
        size: [
            e.optional("voxel.size_x", 0.5)?,
            e.optional("voxel.size_y", 0.5)?,
            e.optional("voxel.size_z", 1.0)?,
        ],
        min: [
            e.optional("voxel.min_x", -20.0)?,
            e.optional("voxel.min_y", -20.0)?,
            e.optional("voxel.min_z", -3.0)?,
        ],
        max: [
            e.optional("voxel.max_x", 20.0)?,
            e.optional("voxel.max_y", 20.0)?,
            e.optional("voxel.max_z", 1.0)?,
        ],
    };

    let sgrid = SGridConfig {
        fine_grid: e.optional("sgrid.fine_grid", 3)?,
        coarse_grid: e.optional("sgrid.coarse_grid", 2)?,
        radius_fine: e.optional("sgrid.radius_fine", Radius::Auto)?,
        radius_coarse: e.optional("sgrid.radius_coarse", Radius::Auto)?,
        max_neighbors: e.optional("sgrid.max_neighbors", 16)?,
        fine_channels: e.optional("sgrid.fine_channels", 32)?,
        coarse_channels: e.optional("sgrid.coarse_channels", 32)?,
        upsample: e.optional("sgrid.upsample", Upsample::Trilinear)?,
    };

    let head = HeadConfig {
        hidden: e.optional("head.hidden", 256)?,
    };

    let synth = SynthSpec {
        boxes: e.optional("synth.boxes", 8)?,
        points_per_box: e.optional("synth.points_per_box", 1500)?,
        ground_points: e.optional("synth.ground_points", 8000)?,
        extent: e.optional("synth.extent", 20.0)?,
    };

    Ok(PipelineConfig {
        seed: e.optional("seed", 0)?,
        sensor,
        rvfe,
        keypoints,
        voxel,
        sgrid,
        head,
        synth,
    })
}

impl FromStr for Radius {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Radius::Auto);
        }
        s.parse::<f64>()
            .map(Radius::Fixed)
            .map_err(|_| format!("expected a radius in meters or `auto`, got `{s}`"))
    }
}

impl FromStr for Upsample {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "trilinear" => Ok(Upsample::Trilinear),
            "nearest" => Ok(Upsample::Nearest),
            other => Err(format!("expected `trilinear` or `nearest`, got `{other}`")),
        }
    }
}

struct Entries {
    values: BTreeMap<String, String>,
    used: BTreeSet<String>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::format(format!(
                    "config line {}: expected `key = value`",
                    lineno + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(Error::format(format!("config line {}: empty key", lineno + 1)));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::config(key, "duplicated key"));
            }
        }
        Ok(Self {
            values,
            used: BTreeSet::new(),
        })
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(raw) = self.values.get(key) else {
            return Ok(None);
        };
        self.used.insert(key.to_string());
        raw.parse::<T>()
            .map(Some)
            .map_err(|err| Error::config(key, format!("cannot parse `{raw}`: {err}")))
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key)?
            .ok_or_else(|| Error::config(key, "missing required key"))
    }

    fn optional<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Which spelling of an angle key the file used.
    fn angle_key(&self, key: &str) -> String {
        let deg = format!("{key}_deg");
        if self.values.contains_key(&deg) {
            deg
        } else {
            key.to_string()
        }
    }

    /// Reads `key` (radians) or `key_deg` (degrees), exactly one required.
    fn angle(&mut self, key: &str) -> Result<f64> {
        let deg_key = format!("{key}_deg");
        let rad: Option<f64> = self.take(key)?;
        let deg: Option<f64> = self.take(&deg_key)?;
        match (rad, deg) {
            (Some(_), Some(_)) => Err(Error::config(
                key,
                format!("give either `{key}` or `{deg_key}`, not both"),
            )),
            (Some(r), None) => Ok(r),
            (None, Some(d)) => Ok(d.to_radians()),
            (None, None) => Err(Error::config(key, "missing required key")),
        }
    }

    fn reject_unused(&self) -> Result<()> {
        match self.values.keys().find(|k| !self.used.contains(*k)) {
            Some(key) => Err(Error::config(key.as_str(), "unknown key")),
            None => Ok(()),
        }
    }
}
