//! The exact pixel/point correspondence of a spherical range image.
//!
//! For a sensor with image size `h x w` and vertical field of view
//! `F = f_up + f_down`, pixel `(u, v)` with range `r` maps to
//!
//! ```text
//! elevation  phi   = (1 - v/h) * F - f_up
//! azimuth    theta = (1 - 2u/w) * pi
//! x = r cos(phi) cos(theta),  y = r cos(phi) sin(theta),  z = r sin(phi)
//! ```
//!
//! so `v = 0` is the row at elevation `f_down` and `v -> h` approaches
//! elevation `-f_up`; `u = 0` looks along `-x` and `u = w/2` along `+x`.
//! The sign of `x` comes from `cos(theta)` so the mapping is a bijection
//! between `[0, w) x [0, h) x (0, inf)` and the in-view part of space.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::types::{plane, FeaturePointCloud, Point, RangeImage, SensorModel};

/// Real-valued pixel coordinates plus range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
    pub r: f64,
}

impl PixelCoord {
    pub fn new(u: f64, v: f64, r: f64, sensor: &SensorModel) -> Result<Self> {
        let px = Self { u, v, r };
        px.check(sensor)?;
        Ok(px)
    }

    fn check(&self, sensor: &SensorModel) -> Result<()> {
        let (w, h) = (sensor.width() as f64, sensor.height() as f64);
        if !(self.u >= 0.0 && self.u < w) {
            return Err(Error::invalid(format!("u = {} outside [0, {w})", self.u)));
        }
        if !(self.v >= 0.0 && self.v < h) {
            return Err(Error::invalid(format!("v = {} outside [0, {h})", self.v)));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::invalid(format!("range {} must be positive", self.r)));
        }
        Ok(())
    }
}

/// Result of projecting a point onto the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Pixel(PixelCoord),
    OutOfFov,
}

impl Projection {
    pub fn pixel(self) -> Option<PixelCoord> {
        match self {
            Projection::Pixel(px) => Some(px),
            Projection::OutOfFov => None,
        }
    }
}

/// Azimuth of (real-valued) column `u`.
pub fn azimuth(u: f64, sensor: &SensorModel) -> f64 {
    (1.0 - 2.0 * u / sensor.width() as f64) * PI
}

/// Elevation of (real-valued) row `v`.
pub fn elevation(v: f64, sensor: &SensorModel) -> f64 {
    (1.0 - v / sensor.height() as f64) * sensor.f_total() - sensor.f_up()
}

pub fn pixel_to_point(px: PixelCoord, sensor: &SensorModel) -> Result<Point> {
    px.check(sensor)?;
    let theta = azimuth(px.u, sensor);
    let phi = elevation(px.v, sensor);
    let (sin_phi, cos_phi) = phi.sin_cos();
    let (sin_theta, cos_theta) = theta.sin_cos();
    Point::new(
        px.r * cos_phi * cos_theta,
        px.r * cos_phi * sin_theta,
        px.r * sin_phi,
        0.0,
    )
}

/// Inverse of [`pixel_to_point`].
///
/// The reachable elevation interval is taken half-open, `(-f_up, f_down]`,
/// so every in-view point lands on a row `v` in `[0, h)`.
pub fn point_to_pixel(p: &Point, sensor: &SensorModel) -> Result<Projection> {
    if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
        return Err(Error::invalid("point coordinates must be finite"));
    }
    let r = p.range();
    if r <= 0.0 {
        return Err(Error::invalid("cannot project a zero-range point"));
    }
    let phi = (p.z / r).clamp(-1.0, 1.0).asin();
    let f_total = sensor.f_total();
    if phi <= -sensor.f_up() || phi > f_total - sensor.f_up() {
        return Ok(Projection::OutOfFov);
    }
    let (w, h) = (sensor.width() as f64, sensor.height() as f64);

    let theta = p.y.atan2(p.x);
    let mut u = w * (1.0 - theta / PI) / 2.0;
    if u >= w {
        // theta = -pi is the same ray as theta = pi
        u -= w;
    }
    let u = u.max(0.0);

    let v = h * (1.0 - (phi + sensor.f_up()) / f_total);
    let v = if v >= h { h.next_down() } else { v.max(0.0) };

    Ok(Projection::Pixel(PixelCoord { u, v, r }))
}

/// What happened to the input points while building a range image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProjectionStats {
    pub total: usize,
    pub in_fov: usize,
    pub out_of_fov: usize,
    /// Points at the origin, which have no direction.
    pub zero_range: usize,
    /// In-view points that lost their pixel to a nearer return.
    pub occluded: usize,
    pub valid_pixels: usize,
}

/// Bins a point cloud into a five-plane range image.
///
/// Each in-view point goes to pixel `(floor(u), floor(v))`. When several
/// points share a pixel the nearest one wins, ties going to the lowest input
/// index, so the result does not depend on evaluation order.
pub fn build_range_image(
    cloud: &[Point],
    sensor: &SensorModel,
) -> Result<(RangeImage, ProjectionStats)> {
    let n = sensor.pixel_count();
    let w = sensor.width();
    let mut winner: Vec<Option<(f64, usize)>> = vec![None; n];
    let mut stats = ProjectionStats {
        total: cloud.len(),
        ..Default::default()
    };

    for (i, p) in cloud.iter().enumerate() {
        if p.range() <= 0.0 {
            stats.zero_range += 1;
            continue;
        }
        let Projection::Pixel(px) = point_to_pixel(p, sensor)? else {
            stats.out_of_fov += 1;
            continue;
        };
        stats.in_fov += 1;
        let idx = (px.v as usize) * w + px.u as usize;
        match winner[idx] {
            Some((best, _)) if best <= px.r => {}
            _ => winner[idx] = Some((px.r, i)),
        }
    }

    let mut img = RangeImage::empty(*sensor, plane::BASE)?;
    let mut data = img.data().to_vec();
    let mut valid = vec![false; n];
    for (idx, slot) in winner.iter().enumerate() {
        if let Some((r, i)) = *slot {
            let p = &cloud[i];
            data[plane::X * n + idx] = p.x;
            data[plane::Y * n + idx] = p.y;
            data[plane::Z * n + idx] = p.z;
            data[plane::INTENSITY * n + idx] = p.intensity;
            data[plane::RANGE * n + idx] = r;
            valid[idx] = true;
        }
    }
    stats.valid_pixels = valid.iter().filter(|&&b| b).count();
    stats.occluded = stats.in_fov - stats.valid_pixels;
    img = RangeImage::from_parts(*sensor, plane::BASE, data, valid)?;
    Ok((img, stats))
}

/// Lifts every valid pixel of a feature image to a 3D feature point.
///
/// Coordinates and intensity are read from the stored planes rather than
/// re-derived from the pixel position. Output order is row-major over the
/// image, and there is exactly one point per valid pixel.
pub fn redeem_feature_points(img: &RangeImage, d_f: usize) -> Result<FeaturePointCloud> {
    if img.num_planes() != plane::BASE + d_f {
        return Err(Error::invalid(format!(
            "redemption expects {} planes (5 + {d_f} features), image has {}",
            plane::BASE + d_f,
            img.num_planes()
        )));
    }
    let (h, w) = (img.height(), img.width());
    let count = img.valid_count();
    let mut points = Vec::with_capacity(count);
    let mut features = Vec::with_capacity(count * d_f);
    let mut pixels = Vec::with_capacity(count);
    for v in 0..h {
        for u in 0..w {
            if !img.is_valid(v, u) {
                continue;
            }
            points.push(Point::new(
                img.get(plane::X, v, u),
                img.get(plane::Y, v, u),
                img.get(plane::Z, v, u),
                img.get(plane::INTENSITY, v, u),
            )?);
            features.extend((0..d_f).map(|c| img.get(plane::BASE + c, v, u)));
            pixels.push((u as u32, v as u32));
        }
    }
    FeaturePointCloud::new(points, d_f, features)?.with_source_pixels(pixels)
}
