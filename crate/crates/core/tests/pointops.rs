mod oracles;

use proptest::prelude::*;
use rangeview::nn::Mlp;
use rangeview::pointops::{
    ball_query, bev_flatten, furthest_point_sampling, pointnet_aggregate, voxelize, VoxelSpec,
};
use rangeview::rng::XorShift64Star;
use rangeview::{FeaturePointCloud, Point};

fn random_cloud(rng: &mut XorShift64Star, n: usize, dim: usize, scale: f64) -> FeaturePointCloud {
    let pts = (0..n)
        .map(|_| {
            Point::new(
                rng.uniform(-scale, scale),
                rng.uniform(-scale, scale),
                rng.uniform(-scale / 4.0, scale / 4.0),
                rng.next_f64(),
            )
            .unwrap()
        })
        .collect();
    let feats = (0..n * dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
    FeaturePointCloud::new(pts, dim, feats).unwrap()
}

fn shifted(cloud: &FeaturePointCloud, t: [f64; 3]) -> FeaturePointCloud {
    let pts = cloud
        .points()
        .iter()
        .map(|p| Point::new(p.x + t[0], p.y + t[1], p.z + t[2], p.intensity).unwrap())
        .collect();
    FeaturePointCloud::new(pts, cloud.dim(), cloud.features().to_vec()).unwrap()
}

#[test]
fn fps_matches_naive_oracle() {
    let mut rng = XorShift64Star::new(11);
    for trial in 0..60 {
        let n = 1 + rng.below(300);
        let c = 1 + rng.below(64);
        let seed = rng.below(n);
        let cloud = random_cloud(&mut rng, n, 0, 10.0);
        let got = furthest_point_sampling(&cloud, c, seed).unwrap();
        assert_eq!(got.indices, oracles::fps(&cloud.positions(), c, seed), "trial {trial}");
    }
}

#[test]
fn fps_on_lattices_with_ties() {
    // integer lattice: many exact distance ties
    let pts: Vec<Point> = (0..64)
        .map(|i| Point::new((i % 4) as f64, ((i / 4) % 4) as f64, (i / 16) as f64, 0.0).unwrap())
        .collect();
    let cloud = FeaturePointCloud::from_points(pts);
    for c in [1, 5, 17, 64, 80] {
        let got = furthest_point_sampling(&cloud, c, 5).unwrap();
        assert_eq!(got.indices, oracles::fps(&cloud.positions(), c, 5));
    }
}

#[test]
fn fps_edge_cases() {
    let mut rng = XorShift64Star::new(2);
    let cloud = random_cloud(&mut rng, 5, 2, 1.0);
    let all = furthest_point_sampling(&cloud, 7, 0).unwrap();
    assert_eq!(all.len(), 5);
    let mut sorted = all.indices.clone();
    sorted.sort();
    assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    assert_eq!(furthest_point_sampling(&cloud, 2, 3).unwrap().indices[0], 3);
    assert!(furthest_point_sampling(&FeaturePointCloud::from_points(vec![]), 1, 0).is_err());
    // the selected features travel with their points
    let kp = furthest_point_sampling(&cloud, 3, 1).unwrap();
    for (k, &i) in kp.indices.iter().enumerate() {
        assert_eq!(kp.cloud.feature(k), cloud.feature(i));
    }
}

#[test]
fn fps_coverage_is_monotone() {
    let mut rng = XorShift64Star::new(5);
    let cloud = random_cloud(&mut rng, 200, 0, 8.0);
    let pos = cloud.positions();
    let full = furthest_point_sampling(&cloud, 40, 0).unwrap().indices;
    let mut prev = f64::INFINITY;
    for c in 1..=40 {
        let sel = &full[..c];
        let cover = (0..pos.len())
            .filter(|i| !sel.contains(i))
            .map(|i| {
                sel.iter()
                    .map(|&s| (0..3).map(|a| (pos[i][a] - pos[s][a]).powi(2)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        assert!(cover <= prev);
        prev = cover;
        // prefixes agree with shorter runs
        assert_eq!(furthest_point_sampling(&cloud, c, 0).unwrap().indices, sel);
    }
}

#[test]
fn fps_translation_equivariance() {
    let mut rng = XorShift64Star::new(6);
    for _ in 0..20 {
        let cloud = random_cloud(&mut rng, 150, 0, 5.0);
        // power-of-two offsets keep every coordinate difference exact
        let t = [64.0, -32.0, 8.0];
        let a = furthest_point_sampling(&cloud, 25, 0).unwrap().indices;
        let b = furthest_point_sampling(&shifted(&cloud, t), 25, 0).unwrap().indices;
        assert_eq!(a, b);
    }
}

#[test]
fn ball_query_matches_linear_scan() {
    let mut rng = XorShift64Star::new(8);
    for _ in 0..50 {
        let cloud = random_cloud(&mut rng, 400, 0, 3.0);
        let pos = cloud.positions();
        let center = [rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), 0.0];
        let r = rng.uniform(0.0, 2.0);
        let k = 1 + rng.below(40);
        assert_eq!(ball_query(center, r, &pos, k), oracles::ball_query(center, r, &pos, k));
    }
}

#[test]
fn ball_query_degenerate_radius() {
    let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
    assert_eq!(ball_query([0.0; 3], 0.0, &pts, 8), vec![0, 2]);
    assert!(ball_query([5.0, 5.0, 5.0], 1.0, &pts, 8).is_empty());
}

#[test]
fn pointnet_matches_oracle_and_special_cases() {
    let mut rng = XorShift64Star::new(9);
    let m = Mlp::random(&[5, 6, 4], true, &mut rng);
    let center = [0.5, -0.5, 1.0];
    let coords: Vec<[f64; 3]> = (0..7).map(|_| [rng.next_f64(), rng.next_f64(), rng.next_f64()]).collect();
    let feats: Vec<Vec<f64>> = (0..7).map(|_| vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)]).collect();
    let flat: Vec<f64> = feats.concat();
    let got = pointnet_aggregate(center, &coords, &flat, 2, &m).unwrap();
    assert!(oracles::max_abs_diff(&got, &oracles::pointnet(center, &coords, &feats, &m)) <= 1e-12);

    // single neighbor: exactly the MLP of the relative encoding
    let one = pointnet_aggregate(center, &coords[..1], &flat[..2], 2, &m).unwrap();
    let mut enc = vec![coords[0][0] - 0.5, coords[0][1] + 0.5, coords[0][2] - 1.0];
    enc.extend_from_slice(&feats[0]);
    assert!(oracles::max_abs_diff(&one[..4], &oracles::mlp(&m, &enc)) <= 1e-12);
    assert_eq!(one[4], 0.0);

    let empty = pointnet_aggregate(center, &[], &[], 2, &m).unwrap();
    assert_eq!(empty, vec![0.0, 0.0, 0.0, 0.0, 1.0]);

    // duplicating and permuting the neighborhood changes nothing
    let mut dup_c = coords.clone();
    dup_c.extend(coords.iter().rev());
    let mut dup_f = flat.clone();
    for f in feats.iter().rev() {
        dup_f.extend_from_slice(f);
    }
    assert_eq!(pointnet_aggregate(center, &dup_c, &dup_f, 2, &m).unwrap(), got);

    assert!(pointnet_aggregate(center, &coords, &flat, 3, &m).is_err());
}

fn spec() -> VoxelSpec {
    VoxelSpec {
        size: [0.5, 0.5, 1.0],
        min: [-4.0, -4.0, -2.0],
        max: [4.0, 4.0, 2.0],
    }
}

#[test]
fn voxel_means_match_group_by() {
    let mut rng = XorShift64Star::new(12);
    for _ in 0..20 {
        let cloud = random_cloud(&mut rng, 600, 3, 5.0);
        let grid = voxelize(&cloud, &spec()).unwrap();
        let feats: Vec<Vec<f64>> = (0..cloud.len()).map(|i| cloud.feature(i).to_vec()).collect();
        let s = spec();
        let want = oracles::voxel_means(&cloud.positions(), &feats, s.size, s.min, s.max);
        assert_eq!(grid.voxels.len(), want.len());
        let mut total = 0;
        for (idx, vox) in &grid.voxels {
            let (mean, count) = &want[idx];
            assert_eq!(vox.count, *count);
            assert!(oracles::max_abs_diff(&vox.mean, mean) <= 1e-12);
            assert!((0..3).all(|a| idx[a] < grid.dims[a]));
            total += vox.count;
        }
        assert_eq!(total, grid.in_range);
        assert_eq!(grid.in_range + grid.out_of_range, cloud.len());
    }
}

#[test]
fn voxel_boundaries_belong_to_the_higher_cell() {
    let pts = vec![
        Point::new(0.0, 0.0, 0.0, 0.0).unwrap(),
        Point::new(4.0, 0.0, 0.0, 0.0).unwrap(),
        Point::new(-4.0, -4.0, -2.0, 0.0).unwrap(),
    ];
    let grid = voxelize(&FeaturePointCloud::from_points(pts), &spec()).unwrap();
    assert_eq!(grid.out_of_range, 1);
    assert!(grid.voxels.contains_key(&[8, 8, 2]));
    assert!(grid.voxels.contains_key(&[0, 0, 0]));
}

#[test]
fn bev_matches_reindexing_oracle() {
    let mut rng = XorShift64Star::new(13);
    let cloud = random_cloud(&mut rng, 500, 2, 5.0);
    let grid = voxelize(&cloud, &spec()).unwrap();
    let bev = bev_flatten(&grid);
    let [nx, ny, nz] = grid.dims;
    assert_eq!((bev.nx, bev.ny, bev.channels), (nx, ny, nz * 2));
    let mut want = vec![0.0; nz * 2 * nx * ny];
    for (&[ix, iy, iz], v) in &grid.voxels {
        for c in 0..2 {
            want[(iz * 2 + c) * nx * ny + iy * nx + ix] = v.mean[c];
        }
    }
    assert_eq!(bev.data, want);
    let mass: f64 = grid.voxels.values().flat_map(|v| v.mean.iter()).sum();
    assert!((bev.total() - mass).abs() <= 1e-12 * mass.abs().max(1.0));

    let empty = bev_flatten(&voxelize(&FeaturePointCloud::from_points(vec![]), &spec()).unwrap());
    assert!(empty.data.iter().all(|&v| v == 0.0));
}

#[test]
fn single_voxel_lands_in_its_channel_block() {
    let p = Point::new(1.2, -0.3, 0.5, 0.0).unwrap();
    let cloud = FeaturePointCloud::new(vec![p], 2, vec![3.0, -1.0]).unwrap();
    let grid = voxelize(&cloud, &spec()).unwrap();
    assert_eq!(grid.voxels.len(), 1);
    let bev = bev_flatten(&grid);
    let (ix, iy, iz) = (10, 7, 2);
    for ch in 0..bev.channels {
        for y in 0..bev.ny {
            for x in 0..bev.nx {
                let v = bev.get(ch, y, x);
                if (x, y) == (ix, iy) && ch / 2 == iz {
                    assert_eq!(v, [3.0, -1.0][ch % 2]);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn ball_query_is_order_invariant(
        pts in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 1..80),
        r in 0.0f64..2.0, k in 1usize..20, rot in 0usize..80
    ) {
        let pos: Vec<[f64; 3]> = pts.iter().map(|&(x, y, z)| [x, y, z]).collect();
        let shift = rot % pos.len();
        let mut rotated = pos.clone();
        rotated.rotate_left(shift);
        let a = ball_query([0.0; 3], r, &pos, k);
        let b: Vec<usize> = ball_query([0.0; 3], r, &rotated, k)
            .into_iter()
            .map(|i| (i + shift) % pos.len())
            .collect();
        // same distances in the same order; indices differ only among ties
        let d = |p: [f64; 3]| p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(d(pos[*x]), d(pos[*y]));
        }
    }

    #[test]
    fn voxelize_conserves_points(
        pts in prop::collection::vec((-6.0f64..6.0, -6.0f64..6.0, -3.0f64..3.0), 0..200)
    ) {
        let cloud = FeaturePointCloud::from_points(
            pts.iter().map(|&(x, y, z)| Point::new(x, y, z, 0.0).unwrap()).collect(),
        );
        let grid = voxelize(&cloud, &spec()).unwrap();
        let counted: usize = grid.voxels.values().map(|v| v.count).sum();
        prop_assert_eq!(counted, grid.in_range);
        prop_assert_eq!(grid.in_range + grid.out_of_range, cloud.len());
    }
}
