//! Shared domain types.
//!
//! Every constructor validates its invariants; once built, values are never
//! mutated behind the caller's back and are safe to share across threads.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Angular geometry of a scanning LiDAR and the size of its range image.
///
/// `f_up` and `f_down` are nonnegative magnitudes in radians. How they map to
/// image rows is decided entirely by [`crate::range_geometry`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    height: usize,
    width: usize,
    f_up: f64,
    f_down: f64,
}

impl SensorModel {
    pub fn new(height: usize, width: usize, f_up: f64, f_down: f64) -> Result<Self> {
        if height == 0 {
            return Err(Error::invalid("sensor height must be at least 1"));
        }
        if width == 0 {
            return Err(Error::invalid("sensor width must be at least 1"));
        }
        if !f_up.is_finite() || f_up < 0.0 {
            return Err(Error::invalid("f_up must be nonnegative"));
        }
        if !f_down.is_finite() || f_down < 0.0 {
            return Err(Error::invalid("f_down must be nonnegative"));
        }
        let total = f_up + f_down;
        if total <= 0.0 {
            return Err(Error::invalid("f_up + f_down must be positive"));
        }
        if total > PI {
            return Err(Error::invalid("f_up + f_down must not exceed pi"));
        }
        Ok(Self {
            height,
            width,
            f_up,
            f_down,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn f_up(&self) -> f64 {
        self.f_up
    }

    pub fn f_down(&self) -> f64 {
        self.f_down
    }

    /// Total vertical field of view.
    pub fn f_total(&self) -> f64 {
        self.f_up + self.f_down
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }
}

/// A LiDAR return. The range is derived from the coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point {
    /// Builds a point, clamping intensity into `[0, 1]`.
    ///
    /// Non-finite coordinates or intensity are rejected. Callers that ingest
    /// raw data use [`Point::intensity_in_range`] to report clamping.
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::invalid("point coordinates must be finite"));
        }
        if !intensity.is_finite() {
            return Err(Error::invalid("point intensity must be finite"));
        }
        Ok(Self {
            x,
            y,
            z,
            intensity: intensity.clamp(0.0, 1.0),
        })
    }

    pub fn intensity_in_range(intensity: f64) -> bool {
        (0.0..=1.0).contains(&intensity)
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// Plane indices of the five fixed range-image channels.
pub mod plane {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const Z: usize = 2;
    pub const INTENSITY: usize = 3;
    pub const RANGE: usize = 4;
    /// Number of fixed planes; feature planes follow.
    pub const BASE: usize = 5;
}

/// An `h x w` grid of per-pixel planes plus a validity mask.
///
/// Planes `0..5` hold `(x, y, z, intensity, range)`; any further planes are
/// feature channels. Storage is plane-major, each plane row-major, so the
/// value of plane `p` at row `v`, column `u` lives at `p*h*w + v*w + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    sensor: SensorModel,
    planes: usize,
    data: Vec<f64>,
    valid: Vec<bool>,
}

impl RangeImage {
    /// An image with every pixel invalid and every plane zero.
    pub fn empty(sensor: SensorModel, planes: usize) -> Result<Self> {
        if planes < plane::BASE {
            return Err(Error::invalid(format!(
                "a range image needs at least {} planes, got {planes}",
                plane::BASE
            )));
        }
        let n = sensor.pixel_count();
        Ok(Self {
            sensor,
            planes,
            data: vec![0.0; planes * n],
            valid: vec![false; n],
        })
    }

    pub fn from_parts(
        sensor: SensorModel,
        planes: usize,
        data: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = sensor.pixel_count();
        if planes < plane::BASE {
            return Err(Error::invalid(format!(
                "a range image needs at least {} planes, got {planes}",
                plane::BASE
            )));
        }
        if data.len() != planes * n {
            return Err(Error::invalid(format!(
                "plane data has {} values, expected {}",
                data.len(),
                planes * n
            )));
        }
        if valid.len() != n {
            return Err(Error::invalid(format!(
                "validity mask has {} entries, expected {n}",
                valid.len()
            )));
        }
        let img = Self {
            sensor,
            planes,
            data,
            valid,
        };
        img.validate()?;
        Ok(img)
    }

    /// Checks the image invariants: invalid pixels are zero in every plane,
    /// valid pixels have a strictly positive range, and all values are finite.
    pub fn validate(&self) -> Result<()> {
        let n = self.sensor.pixel_count();
        for (idx, &ok) in self.valid.iter().enumerate() {
            for p in 0..self.planes {
                let value = self.data[p * n + idx];
                if !value.is_finite() {
                    return Err(Error::invalid(format!(
                        "non-finite value in plane {p} at pixel {idx}"
                    )));
                }
                if !ok && value != 0.0 {
                    return Err(Error::invalid(format!(
                        "invalid pixel {idx} holds nonzero value in plane {p}"
                    )));
                }
            }
            if ok && self.data[plane::RANGE * n + idx] <= 0.0 {
                return Err(Error::invalid(format!(
                    "valid pixel {idx} has nonpositive range"
                )));
            }
        }
        Ok(())
    }

    pub fn sensor(&self) -> &SensorModel {
        &self.sensor
    }

    pub fn height(&self) -> usize {
        self.sensor.height()
    }

    pub fn width(&self) -> usize {
        self.sensor.width()
    }

    pub fn pixel_count(&self) -> usize {
        self.sensor.pixel_count()
    }

    pub fn num_planes(&self) -> usize {
        self.planes
    }

    pub fn num_features(&self) -> usize {
        self.planes - plane::BASE
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn plane(&self, p: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[p * n..(p + 1) * n]
    }

    /// Feature plane `c` (plane `5 + c`).
    pub fn feature_plane(&self, c: usize) -> &[f64] {
        self.plane(plane::BASE + c)
    }

    pub fn get(&self, p: usize, v: usize, u: usize) -> f64 {
        self.data[p * self.pixel_count() + v * self.width() + u]
    }

    /// Overwrites one value without re-validating.
    ///
    /// Writing a nonzero value into an invalid pixel breaks the image
    /// invariant; every consumer in this crate reads through the mask, so
    /// such values are ignored rather than trusted.
    pub fn set(&mut self, p: usize, v: usize, u: usize, value: f64) {
        let n = self.pixel_count();
        let w = self.width();
        self.data[p * n + v * w + u] = value;
    }

    pub fn is_valid(&self, v: usize, u: usize) -> bool {
        self.valid[v * self.width() + u]
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    /// Copy of this image keeping the five base planes and replacing any
    /// feature planes with `features` (`count` planes, plane-major).
    /// Values at invalid pixels are forced to zero.
    pub fn with_features(&self, count: usize, features: &[f64]) -> Result<Self> {
        let n = self.pixel_count();
        if features.len() != count * n {
            return Err(Error::invalid(format!(
                "expected {} feature values, got {}",
                count * n,
                features.len()
            )));
        }
        let mut data = Vec::with_capacity((plane::BASE + count) * n);
        data.extend_from_slice(&self.data[..plane::BASE * n]);
        data.extend_from_slice(features);
        for p in 0..plane::BASE + count {
            for (idx, &ok) in self.valid.iter().enumerate() {
                if !ok {
                    data[p * n + idx] = 0.0;
                }
            }
        }
        Ok(Self {
            sensor: self.sensor,
            planes: plane::BASE + count,
            data,
            valid: self.valid.clone(),
        })
    }

    /// The image as it reads back after a round trip through f32 storage.
    pub fn quantized_f32(&self) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = *v as f32 as f64;
        }
        out
    }
}

/// Redeemed 3D points, each with an embedding of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePointCloud {
    points: Vec<Point>,
    dim: usize,
    features: Vec<f64>,
    source_pixel: Option<Vec<(u32, u32)>>,
}

impl FeaturePointCloud {
    /// `features` is point-major: point `i` owns `features[i*dim..(i+1)*dim]`.
    pub fn new(points: Vec<Point>, dim: usize, features: Vec<f64>) -> Result<Self> {
        if features.len() != points.len() * dim {
            return Err(Error::invalid(format!(
                "{} points with dimension {dim} need {} feature values, got {}",
                points.len(),
                points.len() * dim,
                features.len()
            )));
        }
        Ok(Self {
            points,
            dim,
            features,
            source_pixel: None,
        })
    }

    /// Points without embeddings.
    pub fn from_points(points: Vec<Point>) -> Self {
        Self {
            points,
            dim: 0,
            features: Vec::new(),
            source_pixel: None,
        }
    }

    /// Attaches `(u, v)` provenance, one entry per point.
    pub fn with_source_pixels(mut self, pixels: Vec<(u32, u32)>) -> Result<Self> {
        if pixels.len() != self.points.len() {
            return Err(Error::invalid("source pixel count differs from point count"));
        }
        self.source_pixel = Some(pixels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn source_pixels(&self) -> Option<&[(u32, u32)]> {
        self.source_pixel.as_deref()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(Point::position).collect()
    }
}

/// Maps an angle into `(-pi, pi]`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let a = yaw.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// A 3D box rotated about the vertical axis.
///
/// `size` is `(l, w, h)` along the box's own x, y and z axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    center: [f64; 3],
    size: [f64; 3],
    yaw: f64,
}

impl Box3D {
    pub fn new(center: [f64; 3], size: [f64; 3], yaw: f64) -> Result<Self> {
        if center.iter().any(|c| !c.is_finite()) || !yaw.is_finite() {
            return Err(Error::invalid("box center and yaw must be finite"));
        }
        if size.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::invalid("box sizes must be strictly positive"));
        }
        Ok(Self {
            center,
            size,
            yaw: normalize_yaw(yaw),
        })
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }

    pub fn size(&self) -> [f64; 3] {
        self.size
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn half_diagonal(&self) -> f64 {
        let [l, w, h] = self.size;
        0.5 * (l * l + w * w + h * h).sqrt()
    }
}
