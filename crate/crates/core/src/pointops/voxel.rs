use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::FeaturePointCloud;

/// Axis-aligned voxel partition of `[min, max)` with cell size `size`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelSpec {
    pub size: [f64; 3],
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl VoxelSpec {
    pub fn check(&self) -> Result<()> {
        for a in 0..3 {
            if !(self.size[a].is_finite() && self.size[a] > 0.0) {
                return Err(Error::invalid("voxel size must be strictly positive"));
            }
            if !(self.min[a].is_finite() && self.max[a].is_finite() && self.min[a] < self.max[a]) {
                return Err(Error::invalid("voxel range must satisfy min < max"));
            }
        }
        Ok(())
    }

    /// Cells per axis, `ceil((max - min) / size)`.
    pub fn dims(&self) -> [usize; 3] {
        std::array::from_fn(|a| (((self.max[a] - self.min[a]) / self.size[a]).ceil() as usize).max(1))
    }

    /// Cell of `p`, or `None` outside `[min, max)`. A point on an interior
    /// cell boundary belongs to the higher-index cell.
    pub fn index_of(&self, p: [f64; 3]) -> Option<[usize; 3]> {
        let dims = self.dims();
        let mut idx = [0usize; 3];
        for a in 0..3 {
            if !(p[a] >= self.min[a] && p[a] < self.max[a]) {
                return None;
            }
            let i = ((p[a] - self.min[a]) / self.size[a]).floor() as usize;
            if i >= dims[a] {
                return None;
            }
            idx[a] = i;
        }
        Some(idx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Voxel {
    pub mean: Vec<f64>,
    pub count: usize,
}

/// Occupied voxels keyed by `[ix, iy, iz]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub spec: VoxelSpec,
    pub dims: [usize; 3],
    pub dim: usize,
    pub voxels: BTreeMap<[usize; 3], Voxel>,
    pub in_range: usize,
    pub out_of_range: usize,
}

/// Assigns points to voxels and averages their embeddings.
pub fn voxelize(cloud: &FeaturePointCloud, spec: &VoxelSpec) -> Result<VoxelGrid> {
    spec.check()?;
    let dim = cloud.dim();
    let mut sums: BTreeMap<[usize; 3], (Vec<f64>, usize)> = BTreeMap::new();
    let mut out_of_range = 0;
    for (i, p) in cloud.points().iter().enumerate() {
        let Some(idx) = spec.index_of(p.position()) else {
            out_of_range += 1;
            continue;
        };
        let entry = sums.entry(idx).or_insert_with(|| (vec![0.0; dim], 0));
        for (s, f) in entry.0.iter_mut().zip(cloud.feature(i)) {
            *s += f;
        }
        entry.1 += 1;
    }
    let in_range = cloud.len() - out_of_range;
    let voxels = sums
        .into_iter()
        .map(|(idx, (sum, count))| {
            let mean = sum.into_iter().map(|s| s / count as f64).collect();
            (idx, Voxel { mean, count })
        })
        .collect();
    Ok(VoxelGrid {
        spec: *spec,
        dims: spec.dims(),
        dim,
        voxels,
        in_range,
        out_of_range,
    })
}

/// Bird's-eye-view feature map of `nx x ny` cells with `nz * dim` channels.
///
/// Channel `iz * dim + c` carries feature `c` of the voxel at height `iz`.
/// Storage is channel-major, each channel row-major over `(iy, ix)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BevMap {
    pub nx: usize,
    pub ny: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    /// Whether any voxel of the `(iy, ix)` column is occupied.
    pub occupied: Vec<bool>,
}

impl BevMap {
    pub fn get(&self, channel: usize, iy: usize, ix: usize) -> f64 {
        self.data[channel * self.nx * self.ny + iy * self.nx + ix]
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }
}

pub fn bev_flatten(grid: &VoxelGrid) -> BevMap {
    let [nx, ny, nz] = grid.dims;
    let channels = nz * grid.dim;
    let cells = nx * ny;
    let mut data = vec![0.0; channels * cells];
    let mut occupied = vec![false; cells];
    for (&[ix, iy, iz], voxel) in &grid.voxels {
        let cell = iy * nx + ix;
        occupied[cell] = true;
        for (c, &v) in voxel.mean.iter().enumerate() {
            data[(iz * grid.dim + c) * cells + cell] = v;
        }
    }
    BevMap {
        nx,
        ny,
        channels,
        data,
        occupied,
    }
}
