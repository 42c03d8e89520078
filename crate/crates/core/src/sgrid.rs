//! Synchronous-grid RoI pooling and the box refinement head.
//!
//! Every proposal box is partitioned twice, into a fine `3 x 3 x 3` and a
//! coarse `2 x 2 x 2` grid of cell centers. Each branch pools the keypoints
//! around its grid points with its own radius and PointNet block; the coarse
//! branch is then interpolated onto the fine grid positions and the two are
//! concatenated per fine grid point (fine channels first).
//!
//! All neighbor geometry is evaluated in the canonical box frame, so the
//! pooled features depend only on keypoint positions relative to the box.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{relu_in_place, sigmoid, Dense, Mlp};
use crate::pointops::{ball_query, pointnet_aggregate, KeypointSet};
use crate::rng::XorShift64Star;
use crate::types::Box3D;

/// Sampling radius of one pooling branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    /// Half the diagonal of one grid cell of the box being pooled.
    Auto,
    Fixed(f64),
}

/// How coarse-branch features reach the fine grid positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upsample {
    Trilinear,
    /// Each fine position copies the nearest coarse grid point.
    Nearest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SGridConfig {
    pub fine_grid: usize,
    pub coarse_grid: usize,
    pub radius_fine: Radius,
    pub radius_coarse: Radius,
    /// Neighbor cap per grid point, nearest first.
    pub max_neighbors: usize,
    pub fine_channels: usize,
    pub coarse_channels: usize,
    pub upsample: Upsample,
}

impl Default for SGridConfig {
    fn default() -> Self {
        Self {
            fine_grid: 3,
            coarse_grid: 2,
            radius_fine: Radius::Auto,
            radius_coarse: Radius::Auto,
            max_neighbors: 16,
            fine_channels: 32,
            coarse_channels: 32,
            upsample: Upsample::Trilinear,
        }
    }
}

impl SGridConfig {
    pub fn check(&self) -> Result<()> {
        if self.fine_grid == 0 || self.coarse_grid == 0 {
            return Err(Error::invalid("grid sizes must be at least 1"));
        }
        if self.max_neighbors == 0 {
            return Err(Error::invalid("neighbor cap must be at least 1"));
        }
        if self.fine_channels == 0 || self.coarse_channels == 0 {
            return Err(Error::invalid("pooling channel counts must be positive"));
        }
        for r in [self.radius_fine, self.radius_coarse] {
            if let Radius::Fixed(v) = r {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::invalid("pooling radii must be strictly positive"));
                }
            }
        }
        Ok(())
    }

    pub fn fine_points(&self) -> usize {
        self.fine_grid.pow(3)
    }

    pub fn coarse_points(&self) -> usize {
        self.coarse_grid.pow(3)
    }

    /// Length of a flattened [`RoIFeature`].
    pub fn feature_len(&self) -> usize {
        self.fine_points() * (self.fine_channels + self.coarse_channels)
    }
}

/// Shared PointNet blocks of the two branches. Both take
/// `[relative xyz, keypoint features]` and end with a rectifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SGridParams {
    pub fine: Mlp,
    pub coarse: Mlp,
}

pub fn init_sgrid_params(seed: u64, keypoint_dim: usize, cfg: &SGridConfig) -> SGridParams {
    let mut rng = XorShift64Star::from_stream(seed, "sgrid");
    let fine = Mlp::random(
        &[3 + keypoint_dim, cfg.fine_channels, cfg.fine_channels],
        true,
        &mut rng,
    );
    let coarse = Mlp::random(
        &[3 + keypoint_dim, cfg.coarse_channels, cfg.coarse_channels],
        true,
        &mut rng,
    );
    SGridParams { fine, coarse }
}

/// Pooled features of one box.
///
/// `values` is grid-point-major: fine grid point `g` owns
/// `values[g*(cf+cc)..(g+1)*(cf+cc)]`, fine channels then upsampled coarse
/// channels. Grid points are ordered x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct RoIFeature {
    pub values: Vec<f64>,
    /// Per fine grid point: no keypoint within the fine radius.
    pub fine_empty: Vec<bool>,
    /// Per coarse grid point: no keypoint within the coarse radius.
    pub coarse_empty: Vec<bool>,
}

/// World point into the box frame: translate by `-center`, rotate by `-yaw`.
pub fn canonical_transform(p: [f64; 3], b: &Box3D) -> [f64; 3] {
    let c = b.center();
    let (s, co) = b.yaw().sin_cos();
    let (dx, dy, dz) = (p[0] - c[0], p[1] - c[1], p[2] - c[2]);
    [co * dx + s * dy, -s * dx + co * dy, dz]
}

/// Inverse of [`canonical_transform`].
pub fn from_canonical(q: [f64; 3], b: &Box3D) -> [f64; 3] {
    let c = b.center();
    let (s, co) = b.yaw().sin_cos();
    [co * q[0] - s * q[1] + c[0], s * q[0] + co * q[1] + c[1], q[2] + c[2]]
}

fn cell_center(k: usize, g: usize, extent: f64) -> f64 {
    (-0.5 + (k as f64 + 0.5) / g as f64) * extent
}

/// Cell centers of a `g^3` partition of a box of `size`, in the box frame.
pub fn canonical_grid(size: [f64; 3], g: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(g * g * g);
    for iz in 0..g {
        for iy in 0..g {
            for ix in 0..g {
                out.push([
                    cell_center(ix, g, size[0]),
                    cell_center(iy, g, size[1]),
                    cell_center(iz, g, size[2]),
                ]);
            }
        }
    }
    out
}

/// World-frame grid points of `b` (x fastest, then y, then z in the box frame).
pub fn gen_grid_points(b: &Box3D, g: usize) -> Result<Vec<[f64; 3]>> {
    if g == 0 {
        return Err(Error::invalid("grid size must be at least 1"));
    }
    Ok(canonical_grid(b.size(), g)
        .into_iter()
        .map(|q| from_canonical(q, b))
        .collect())
}

pub fn resolve_radius(r: Radius, b: &Box3D, g: usize) -> f64 {
    match r {
        Radius::Fixed(v) => v,
        Radius::Auto => {
            let [l, w, h] = b.size();
            let g = g as f64;
            0.5 * ((l / g).powi(2) + (w / g).powi(2) + (h / g).powi(2)).sqrt()
        }
    }
}

/// A `g^3` lattice of feature vectors spanning the box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGrid<'a> {
    pub g: usize,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub channels: usize,
    /// Point-major, lattice ordered x fastest.
    pub values: &'a [f64],
}

impl<'a> CoarseGrid<'a> {
    /// The lattice formed by the coarse cell centers of a box of `size`.
    pub fn for_box(size: [f64; 3], g: usize, channels: usize, values: &'a [f64]) -> Self {
        let lo = std::array::from_fn(|a| cell_center(0, g, size[a]));
        let hi = std::array::from_fn(|a| cell_center(g - 1, g, size[a]));
        Self {
            g,
            lo,
            hi,
            channels,
            values,
        }
    }
}

/// Interpolates coarse-grid features at `positions`, clamping positions
/// outside the lattice hull onto it. Returns point-major values.
pub fn upsample_grid(
    coarse: &CoarseGrid,
    positions: &[[f64; 3]],
    method: Upsample,
) -> Result<Vec<f64>> {
    let g = coarse.g;
    let c = coarse.channels;
    if g == 0 || coarse.values.len() != g * g * g * c {
        return Err(Error::invalid(format!(
            "coarse grid needs {} values, got {}",
            g * g * g * c,
            coarse.values.len()
        )));
    }
    let at = |ix: usize, iy: usize, iz: usize| {
        let k = ix + g * (iy + g * iz);
        &coarse.values[k * c..(k + 1) * c]
    };
    let mut out = Vec::with_capacity(positions.len() * c);
    for p in positions {
        // continuous lattice coordinate per axis, clamped into the hull
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let span = coarse.hi[a] - coarse.lo[a];
            let t = if g > 1 && span > 0.0 {
                ((p[a] - coarse.lo[a]) / span).clamp(0.0, 1.0) * (g - 1) as f64
            } else {
                0.0
            };
            match method {
                Upsample::Trilinear => {
                    let i0 = (t.floor() as usize).min(g.saturating_sub(2));
                    base[a] = i0;
                    frac[a] = t - i0 as f64;
                }
                Upsample::Nearest => {
                    base[a] = ((t + 0.5).floor() as usize).min(g - 1);
                    frac[a] = 0.0;
                }
            }
        }
        let mut acc = vec![0.0; c];
        if method == Upsample::Nearest || g == 1 {
            acc.copy_from_slice(at(base[0], base[1], base[2]));
        } else {
            for dz in 0..2 {
                let wz = if dz == 0 { 1.0 - frac[2] } else { frac[2] };
                for dy in 0..2 {
                    let wy = if dy == 0 { 1.0 - frac[1] } else { frac[1] };
                    for dx in 0..2 {
                        let wx = if dx == 0 { 1.0 - frac[0] } else { frac[0] };
                        let wgt = wx * wy * wz;
                        if wgt == 0.0 {
                            continue;
                        }
                        let v = at(base[0] + dx, base[1] + dy, base[2] + dz);
                        for (o, x) in acc.iter_mut().zip(v) {
                            *o += wgt * x;
                        }
                    }
                }
            }
        }
        out.extend_from_slice(&acc);
    }
    Ok(out)
}

/// Pools one branch: aggregated features (point-major) and emptiness flags.
fn pool_branch(
    grid: &[[f64; 3]],
    radius: f64,
    max_k: usize,
    coords: &[[f64; 3]],
    feats: &[&[f64]],
    dim: usize,
    mlp: &Mlp,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let c = mlp.outputs();
    let mut values = Vec::with_capacity(grid.len() * c);
    let mut empty = Vec::with_capacity(grid.len());
    for &gp in grid {
        let idx = ball_query(gp, radius, coords, max_k);
        let nb: Vec<[f64; 3]> = idx.iter().map(|&i| coords[i]).collect();
        let mut nf = Vec::with_capacity(idx.len() * dim);
        for &i in &idx {
            nf.extend_from_slice(feats[i]);
        }
        let agg = pointnet_aggregate(gp, &nb, &nf, dim, mlp)?;
        values.extend_from_slice(&agg[..c]);
        empty.push(agg[c] == 1.0);
    }
    Ok((values, empty))
}

fn pool_box(
    keypoints: &KeypointSet,
    positions: &[[f64; 3]],
    b: &Box3D,
    cfg: &SGridConfig,
    params: &SGridParams,
) -> Result<RoIFeature> {
    let r_fine = resolve_radius(cfg.radius_fine, b, cfg.fine_grid);
    let r_coarse = resolve_radius(cfg.radius_coarse, b, cfg.coarse_grid);
    if !(r_fine > 0.0 && r_coarse > 0.0) {
        return Err(Error::invalid("pooling radii must be strictly positive"));
    }

    // keypoints that can reach any grid point of this box
    let reach = r_fine.max(r_coarse) + b.half_diagonal();
    let reach2 = (reach * (1.0 + 1e-9) + 1e-9).powi(2);
    let center = b.center();
    let mut coords = Vec::new();
    let mut feats: Vec<&[f64]> = Vec::new();
    for (i, p) in positions.iter().enumerate() {
        if crate::pointops::dist2(p, &center) <= reach2 {
            coords.push(canonical_transform(*p, b));
            feats.push(keypoints.cloud.feature(i));
        }
    }
    let dim = keypoints.dim();

    let fine_grid = canonical_grid(b.size(), cfg.fine_grid);
    let coarse_grid = canonical_grid(b.size(), cfg.coarse_grid);
    let (fine, fine_empty) = pool_branch(
        &fine_grid,
        r_fine,
        cfg.max_neighbors,
        &coords,
        &feats,
        dim,
        &params.fine,
    )?;
    let (coarse, coarse_empty) = pool_branch(
        &coarse_grid,
        r_coarse,
        cfg.max_neighbors,
        &coords,
        &feats,
        dim,
        &params.coarse,
    )?;
    let lattice = CoarseGrid::for_box(b.size(), cfg.coarse_grid, cfg.coarse_channels, &coarse);
    let up = upsample_grid(&lattice, &fine_grid, cfg.upsample)?;

    let (cf, cc) = (cfg.fine_channels, cfg.coarse_channels);
    let mut values = Vec::with_capacity(cfg.feature_len());
    for g in 0..fine_grid.len() {
        values.extend_from_slice(&fine[g * cf..(g + 1) * cf]);
        values.extend_from_slice(&up[g * cc..(g + 1) * cc]);
    }
    Ok(RoIFeature {
        values,
        fine_empty,
        coarse_empty,
    })
}

/// Pools RoI features for every box; output order follows `boxes`.
pub fn sgrid_pool(
    keypoints: &KeypointSet,
    boxes: &[Box3D],
    cfg: &SGridConfig,
    params: &SGridParams,
) -> Result<Vec<RoIFeature>> {
    cfg.check()?;
    let dim = keypoints.dim();
    for (name, mlp, c) in [
        ("fine", &params.fine, cfg.fine_channels),
        ("coarse", &params.coarse, cfg.coarse_channels),
    ] {
        mlp.check()?;
        if mlp.inputs() != 3 + dim || mlp.outputs() != c {
            return Err(Error::invalid(format!(
                "{name} pooling MLP is {} -> {}, expected {} -> {c}",
                mlp.inputs(),
                mlp.outputs(),
                3 + dim
            )));
        }
    }
    let positions = keypoints.positions();
    boxes
        .par_iter()
        .map(|b| pool_box(keypoints, &positions, b, cfg, params))
        .collect()
}

/// Two-layer MLP trunk with separate confidence and box-residual branches.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub fc1: Dense,
    pub fc2: Dense,
    pub confidence: Dense,
    pub residual: Dense,
}

pub fn init_head_params(seed: u64, roi_len: usize, hidden: usize) -> HeadParams {
    let mut rng = XorShift64Star::from_stream(seed, "head");
    HeadParams {
        fc1: Dense::random(roi_len, hidden, &mut rng),
        fc2: Dense::random(hidden, hidden, &mut rng),
        confidence: Dense::random(hidden, 1, &mut rng),
        residual: Dense::random(hidden, 7, &mut rng),
    }
}

/// Refinement output for one box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    /// IoU-style confidence in `(0, 1)`.
    pub confidence: f64,
    /// Deltas for `(cx, cy, cz, l, w, h, yaw)`.
    pub residuals: [f64; 7],
}

pub fn refine_head_forward(roi: &RoIFeature, params: &HeadParams) -> Result<Refinement> {
    for layer in [&params.fc1, &params.fc2, &params.confidence, &params.residual] {
        layer.check()?;
    }
    let hidden = params.fc1.outputs;
    if params.fc1.inputs != roi.values.len()
        || params.fc2.inputs != hidden
        || params.fc2.outputs != hidden
        || params.confidence.inputs != hidden
        || params.confidence.outputs != 1
        || params.residual.inputs != hidden
        || params.residual.outputs != 7
    {
        return Err(Error::invalid(format!(
            "head expects a {}-long RoI feature and consistent layer widths, got {}",
            params.fc1.inputs,
            roi.values.len()
        )));
    }
    let mut x = params.fc1.forward(&roi.values);
    relu_in_place(&mut x);
    let mut x = params.fc2.forward(&x);
    relu_in_place(&mut x);
    let confidence = sigmoid(params.confidence.forward(&x)[0]);
    let r = params.residual.forward(&x);
    let mut residuals = [0.0; 7];
    residuals.copy_from_slice(&r);
    Ok(Refinement {
        confidence,
        residuals,
    })
}
