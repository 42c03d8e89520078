//! Point-set primitives: furthest point sampling, ball query, PointNet
//! aggregation, voxelization and bird's-eye-view flattening.

mod fps;
mod neighbors;
mod voxel;

pub use fps::{furthest_point_sampling, KeypointSet};
pub use neighbors::{ball_query, encode_keypoints, pointnet_aggregate};
pub use voxel::{bev_flatten, voxelize, BevMap, Voxel, VoxelGrid, VoxelSpec};

pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}
