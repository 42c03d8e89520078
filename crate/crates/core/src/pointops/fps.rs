use rayon::prelude::*;

use super::dist2;
use crate::error::{Error, Result};
use crate::types::FeaturePointCloud;

/// Representative points selected from a [`FeaturePointCloud`].
///
/// `cloud` holds the selected points (coordinates, intensity and features) in
/// selection order; `indices[k]` is the source index of `cloud.points()[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    pub indices: Vec<usize>,
    pub cloud: FeaturePointCloud,
}

impl KeypointSet {
    /// Treats every point of `cloud` as a keypoint, indices `0..n`.
    pub fn from_cloud(cloud: FeaturePointCloud) -> Self {
        Self {
            indices: (0..cloud.len()).collect(),
            cloud,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.cloud.dim()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.cloud.positions()
    }
}

const CHUNK: usize = 2048;

/// Greedy furthest point sampling.
///
/// Starts at `seed_index`; every further pick maximizes the squared distance
/// to the nearest already-selected point, ties going to the lowest index.
/// When `count >= N` all points are returned, in selection order.
pub fn furthest_point_sampling(
    cloud: &FeaturePointCloud,
    count: usize,
    seed_index: usize,
) -> Result<KeypointSet> {
    let n = cloud.len();
    if n == 0 {
        return Err(Error::invalid("furthest point sampling needs a nonempty cloud"));
    }
    if count == 0 {
        return Err(Error::invalid("keypoint count must be at least 1"));
    }
    if seed_index >= n {
        return Err(Error::invalid(format!(
            "seed index {seed_index} out of range for {n} points"
        )));
    }
    let take = count.min(n);
    let pos = cloud.positions();
    let mut nearest = vec![f64::INFINITY; n];
    let mut selected = vec![false; n];
    let mut order = Vec::with_capacity(take);
    order.push(seed_index);
    selected[seed_index] = true;

    while order.len() < take {
        let last = pos[*order.last().expect("nonempty")];
        // (distance, index) of the best candidate in each chunk
        let best = nearest
            .par_chunks_mut(CHUNK)
            .enumerate()
            .map(|(ci, chunk)| {
                let mut best: Option<(f64, usize)> = None;
                for (k, d) in chunk.iter_mut().enumerate() {
                    let i = ci * CHUNK + k;
                    if selected[i] {
                        continue;
                    }
                    let dd = dist2(&pos[i], &last);
                    if dd < *d {
                        *d = dd;
                    }
                    if best.is_none_or(|(bd, _)| *d > bd) {
                        best = Some((*d, i));
                    }
                }
                best
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .fold(None::<(f64, usize)>, |acc, cand| match acc {
                Some((bd, _)) if cand.0 <= bd => acc,
                _ => Some(cand),
            });
        let (_, pick) = best.expect("unselected points remain");
        selected[pick] = true;
        order.push(pick);
    }

    let dim = cloud.dim();
    let points = order.iter().map(|&i| cloud.points()[i]).collect();
    let mut features = Vec::with_capacity(take * dim);
    for &i in &order {
        features.extend_from_slice(cloud.feature(i));
    }
    Ok(KeypointSet {
        indices: order,
        cloud: FeaturePointCloud::new(points, dim, features)?,
    })
}
