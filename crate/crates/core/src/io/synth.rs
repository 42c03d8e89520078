//! Deterministic synthetic driving scenes: car-sized boxes on a flat ground.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::XorShift64Star;
use crate::sgrid::from_canonical;
use crate::types::{Box3D, FeaturePointCloud, Point};

/// Ground height below the sensor, metres.
pub const GROUND_Z: f64 = -1.7;
/// Boxes keep at least this horizontal distance from the sensor.
pub const MIN_BOX_DISTANCE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub boxes: usize,
    /// Surface samples per box.
    pub points_per_box: usize,
    pub ground_points: usize,
    /// Scene half-width, metres.
    pub extent: f64,
}

impl SynthSpec {
    pub fn check(&self) -> Result<()> {
        if self.points_per_box == 0 {
            return Err(Error::invalid("points_per_box must be positive"));
        }
        if !(self.extent.is_finite() && self.extent > MIN_BOX_DISTANCE + 1.0) {
            return Err(Error::invalid(format!(
                "scene extent must exceed {} m, got {}",
                MIN_BOX_DISTANCE + 1.0,
                self.extent
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub seed: u64,
    pub boxes: Vec<Box3D>,
    /// Feature-less cloud; box surface points first, ground last.
    pub cloud: FeaturePointCloud,
    /// `Some(k)` for a point sampled on the surface of box `k`.
    pub box_of_point: Vec<Option<usize>>,
}

impl SyntheticScene {
    pub fn is_foreground(&self, i: usize) -> bool {
        self.box_of_point[i].is_some()
    }

    pub fn foreground_count(&self) -> usize {
        self.box_of_point.iter().filter(|b| b.is_some()).count()
    }
}

fn place_box(rng: &mut XorShift64Star, extent: f64, placed: &[Box3D]) -> Result<Box3D> {
    let size = [rng.uniform(3.5, 4.8), rng.uniform(1.6, 2.0), rng.uniform(1.4, 1.8)];
    let near = MIN_BOX_DISTANCE + 1.0;
    let far = (extent - size[0]).max(near + 0.1);
    let mut best = None;
    for _ in 0..64 {
        let dist = rng.uniform(near, far);
        let az = rng.uniform(-PI, PI);
        let yaw = rng.uniform(-PI, PI);
        let b = Box3D::new(
            [dist * az.cos(), dist * az.sin(), GROUND_Z + size[2] / 2.0],
            size,
            yaw,
        )?;
        let clear = placed.iter().all(|o| {
            let d = (o.center()[0] - b.center()[0]).hypot(o.center()[1] - b.center()[1]);
            d > o.half_diagonal() + b.half_diagonal()
        });
        if clear {
            return Ok(b);
        }
        best.get_or_insert(b);
    }
    Ok(best.expect("at least one attempt"))
}

/// Samples a point uniformly on the five visible faces (all but the bottom),
/// each face picked with probability proportional to its area.
fn surface_point(rng: &mut XorShift64Star, b: &Box3D) -> [f64; 3] {
    let [l, w, h] = b.size();
    let half = [l / 2.0, w / 2.0, h / 2.0];
    // (normal axis, sign, area)
    let faces = [
        (0, 1.0, w * h),
        (0, -1.0, w * h),
        (1, 1.0, l * h),
        (1, -1.0, l * h),
        (2, 1.0, l * w),
    ];
    let total: f64 = faces.iter().map(|f| f.2).sum();
    let mut pick = rng.uniform(0.0, total);
    let mut face = faces[faces.len() - 1];
    for f in faces {
        if pick < f.2 {
            face = f;
            break;
        }
        pick -= f.2;
    }
    let mut q = [0.0; 3];
    for (k, qk) in q.iter_mut().enumerate() {
        *qk = if k == face.0 {
            face.1 * half[k]
        } else {
            rng.uniform(-half[k], half[k])
        };
    }
    from_canonical(q, b)
}

pub fn gen_synthetic_scene(spec: &SynthSpec, seed: u64) -> Result<SyntheticScene> {
    spec.check()?;
    let mut rng = XorShift64Star::from_stream(seed, "synth.boxes");
    let mut boxes = Vec::with_capacity(spec.boxes);
    for _ in 0..spec.boxes {
        let b = place_box(&mut rng, spec.extent, &boxes)?;
        boxes.push(b);
    }

    let mut rng = XorShift64Star::from_stream(seed, "synth.points");
    let total = spec.boxes * spec.points_per_box + spec.ground_points;
    let mut points = Vec::with_capacity(total);
    let mut box_of_point = Vec::with_capacity(total);
    for (k, b) in boxes.iter().enumerate() {
        for _ in 0..spec.points_per_box {
            let [x, y, z] = surface_point(&mut rng, b);
            points.push(Point::new(x, y, z, rng.uniform(0.2, 1.0))?);
            box_of_point.push(Some(k));
        }
    }
    for _ in 0..spec.ground_points {
        let x = rng.uniform(-spec.extent, spec.extent);
        let y = rng.uniform(-spec.extent, spec.extent);
        points.push(Point::new(x, y, GROUND_Z, rng.uniform(0.0, 0.3))?);
        box_of_point.push(None);
    }
    Ok(SyntheticScene {
        seed,
        boxes,
        cloud: FeaturePointCloud::from_points(points),
        box_of_point,
    })
}
