use rayon::prelude::*;

use super::{dist2, KeypointSet};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::types::FeaturePointCloud;

/// Indices of at most `max_k` points within `radius` of `center`
/// (inclusive), nearest first, ties by index.
pub fn ball_query(center: [f64; 3], radius: f64, points: &[[f64; 3]], max_k: usize) -> Vec<usize> {
    let r2 = radius * radius;
    let mut hits: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let d = dist2(p, &center);
            (d <= r2).then_some((d, i))
        })
        .collect();
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    hits.truncate(max_k);
    hits.into_iter().map(|(_, i)| i).collect()
}

/// PointNet set abstraction over one neighborhood.
///
/// Each neighbor is encoded as `[p - center, features]`, passed through the
/// shared `mlp` and max-pooled channel-wise. The result has
/// `mlp.outputs() + 1` entries; the last one is an emptiness flag, `1.0`
/// for an empty neighborhood (all other channels zero) and `0.0` otherwise.
pub fn pointnet_aggregate(
    center: [f64; 3],
    coords: &[[f64; 3]],
    features: &[f64],
    dim: usize,
    mlp: &Mlp,
) -> Result<Vec<f64>> {
    if mlp.inputs() != 3 + dim {
        return Err(Error::invalid(format!(
            "PointNet MLP takes {} inputs, neighbors provide {}",
            mlp.inputs(),
            3 + dim
        )));
    }
    if features.len() != coords.len() * dim {
        return Err(Error::invalid(format!(
            "{} neighbors of dimension {dim} need {} feature values, got {}",
            coords.len(),
            coords.len() * dim,
            features.len()
        )));
    }
    let c = mlp.outputs();
    let mut out = vec![0.0; c + 1];
    if coords.is_empty() {
        out[c] = 1.0;
        return Ok(out);
    }
    out[..c].fill(f64::NEG_INFINITY);
    let mut enc = vec![0.0; 3 + dim];
    for (k, p) in coords.iter().enumerate() {
        for a in 0..3 {
            enc[a] = p[a] - center[a];
        }
        enc[3..].copy_from_slice(&features[k * dim..(k + 1) * dim]);
        for (o, v) in out[..c].iter_mut().zip(mlp.forward(&enc)) {
            if v > *o {
                *o = v;
            }
        }
    }
    Ok(out)
}

/// Re-extracts keypoint features with a PointNet block over the full cloud.
///
/// For every keypoint the neighbors within `radius` (at most `max_k`,
/// nearest first) are aggregated with `mlp`; the emptiness flag is dropped
/// since a keypoint is always its own neighbor.
pub fn encode_keypoints(
    keypoints: &KeypointSet,
    cloud: &FeaturePointCloud,
    radius: f64,
    max_k: usize,
    mlp: &Mlp,
) -> Result<KeypointSet> {
    let positions = cloud.positions();
    let dim = cloud.dim();
    let c = mlp.outputs();
    let centers = keypoints.positions();
    let encoded: Vec<Vec<f64>> = centers
        .par_iter()
        .map(|&center| {
            let idx = ball_query(center, radius, &positions, max_k);
            let coords: Vec<[f64; 3]> = idx.iter().map(|&i| positions[i]).collect();
            let mut feats = Vec::with_capacity(idx.len() * dim);
            for &i in &idx {
                feats.extend_from_slice(cloud.feature(i));
            }
            pointnet_aggregate(center, &coords, &feats, dim, mlp).map(|mut v| {
                v.truncate(c);
                v
            })
        })
        .collect::<Result<_>>()?;
    let features = encoded.into_iter().flatten().collect();
    Ok(KeypointSet {
        indices: keypoints.indices.clone(),
        cloud: FeaturePointCloud::new(keypoints.cloud.points().to_vec(), c, features)?,
    })
}
