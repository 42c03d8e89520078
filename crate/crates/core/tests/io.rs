use proptest::prelude::*;
use rangeview::config::parse_config;
use rangeview::io::{
    decode_kitti, decode_rfp, decode_rrf, decode_rri, decode_rwt, encode_kitti, encode_rfp,
    encode_rrf, encode_rri, encode_rwt, format_boxes, gen_synthetic_scene, parse_boxes,
    read_kitti_bin, write_kitti_bin, RawPlanes, SynthSpec, TensorRecord,
};
use rangeview::range_geometry::build_range_image;
use rangeview::sgrid::{canonical_transform, RoIFeature};
use rangeview::weights::ModelWeights;
use rangeview::{Box3D, Error, FeaturePointCloud, Point, SensorModel};

fn finite_f32() -> impl Strategy<Value = f32> {
    prop::num::f32::NORMAL | prop::num::f32::ZERO | prop::num::f32::SUBNORMAL
}

fn bytes_of(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

#[test]
fn kitti_record_arithmetic() {
    assert_eq!(decode_kitti(&[0u8; 32]).unwrap().len(), 2);
    assert!(matches!(decode_kitti(&[0u8; 17]), Err(Error::Format(_))));
    let mut bad = bytes_of(&[1.0, 2.0, 3.0, 0.5, 1.0, f32::NAN, 0.0, 0.0]);
    assert!(matches!(decode_kitti(&bad), Err(Error::Record { index: 1, .. })));
    bad.truncate(16);
    assert_eq!(decode_kitti(&bad).unwrap()[0].range(), 14f64.sqrt());
}

#[test]
fn kitti_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.bin");
    let raw = bytes_of(&[1.5, -2.25, 0.125, 0.75, -0.0, 1e-3, 7.0, 0.0]);
    std::fs::write(&path, &raw).unwrap();
    let pts = read_kitti_bin(&path).unwrap();
    let out = dir.path().join("copy.bin");
    write_kitti_bin(&out, &pts).unwrap();
    assert_eq!(std::fs::read(out).unwrap(), raw);
}

#[test]
fn bad_magic_everywhere() {
    assert!(decode_rri(b"RFP1\0\0\0\0").is_err());
    assert!(decode_rfp(b"RRI1\0\0\0\0\0\0\0\0").is_err());
    assert!(decode_rwt(b"").is_err());
    assert!(decode_rrf(b"RRF").is_err());
}

#[test]
fn range_image_file_round_trip() {
    let s = SensorModel::new(16, 64, 0.4, 0.05).unwrap();
    let pts: Vec<Point> = (0..500)
        .map(|i| {
            let a = i as f64 * 0.0127;
            Point::new(9.0 * a.cos(), 9.0 * a.sin(), -2.0 + 0.005 * i as f64, 0.3).unwrap()
        })
        .collect();
    let (img, _) = build_range_image(&pts, &s).unwrap();
    let bytes = encode_rri(&RawPlanes::from_image(&img)).unwrap();
    let back = decode_rri(&bytes).unwrap().into_range_image(&s).unwrap();
    assert_eq!(back, img.quantized_f32());
    assert_eq!(encode_rri(&RawPlanes::from_image(&back)).unwrap(), bytes);
    let other = SensorModel::new(8, 64, 0.4, 0.05).unwrap();
    assert!(decode_rri(&bytes).unwrap().into_range_image(&other).is_err());
}

#[test]
fn weights_round_trip_through_rwt() {
    let cfg = parse_config(
        "sensor.height = 4\nsensor.width = 8\nsensor.f_up = 0.3\nsensor.f_down = 0.1\n\
         rvfe.c_in = 3\nrvfe.c_mid = 4\nrvfe.d_f = 4\nkeypoints.channels = 3\n\
         sgrid.fine_channels = 2\nsgrid.coarse_channels = 2\nhead.hidden = 5\n",
    )
    .unwrap();
    let w = ModelWeights::init(&cfg, 17).unwrap();
    let bytes = encode_rwt(&w.to_records()).unwrap();
    let decoded = decode_rwt(&bytes).unwrap();
    assert_eq!(encode_rwt(&decoded).unwrap(), bytes);
    assert_eq!(ModelWeights::from_records(&cfg, decoded).unwrap(), w);
}

#[test]
fn synthetic_scene_properties() {
    let spec = SynthSpec {
        boxes: 8,
        points_per_box: 1500,
        ground_points: 8000,
        extent: 20.0,
    };
    let a = gen_synthetic_scene(&spec, 99).unwrap();
    assert_eq!(a, gen_synthetic_scene(&spec, 99).unwrap());
    assert_eq!(a.cloud.len(), 20_000);
    assert_eq!(a.boxes.len(), 8);
    for (i, p) in a.cloud.points().iter().enumerate() {
        match a.box_of_point[i] {
            Some(k) => {
                let b = &a.boxes[k];
                let q = canonical_transform(p.position(), b);
                let half = b.size().map(|s| s / 2.0);
                assert!((0..3).any(|ax| (q[ax].abs() - half[ax]).abs() <= 1e-9));
                assert!((0..3).all(|ax| q[ax].abs() <= half[ax] + 1e-9));
                assert!(a.is_foreground(i));
            }
            None => assert!(!a.is_foreground(i)),
        }
    }
    let empty = gen_synthetic_scene(&SynthSpec { boxes: 0, ..spec }, 1).unwrap();
    assert!(empty.boxes.is_empty());
    assert!(empty.box_of_point.iter().all(Option::is_none));
    // the box file carries the generating parameters losslessly
    assert_eq!(parse_boxes(&format_boxes(&a.boxes)).unwrap(), a.boxes);
}

proptest! {
    #[test]
    fn kitti_bytes_round_trip(
        recs in prop::collection::vec((finite_f32(), finite_f32(), finite_f32(), 0.0f32..=1.0), 0..100)
    ) {
        let flat: Vec<f32> = recs.iter().flat_map(|&(x, y, z, i)| [x, y, z, i]).collect();
        let raw = bytes_of(&flat);
        let pts = decode_kitti(&raw).unwrap();
        prop_assert_eq!(pts.len(), recs.len());
        prop_assert_eq!(encode_kitti(&pts), raw);
    }

    #[test]
    fn rri_round_trip(
        h in 1usize..6, w in 1usize..9, planes in 0usize..4, seed in any::<u64>()
    ) {
        let mut rng = rangeview::rng::XorShift64Star::new(seed);
        let raw = RawPlanes {
            height: h,
            width: w,
            planes,
            data: (0..planes * h * w).map(|_| rng.uniform(-1e3, 1e3) as f32).collect(),
            mask: (0..h * w).map(|_| rng.next_f64() < 0.5).collect(),
        };
        let bytes = encode_rri(&raw).unwrap();
        let back = decode_rri(&bytes).unwrap();
        prop_assert_eq!(encode_rri(&back).unwrap(), bytes);
        prop_assert_eq!(back, raw);
    }

    #[test]
    fn rfp_round_trip(
        recs in prop::collection::vec(
            (finite_f32(), finite_f32(), finite_f32(), 0.0f32..=1.0, prop::collection::vec(finite_f32(), 3)),
            0..50,
        )
    ) {
        let pts: Vec<Point> = recs
            .iter()
            .map(|(x, y, z, i, _)| Point::new(*x as f64, *y as f64, *z as f64, *i as f64).unwrap())
            .collect();
        let feats: Vec<f64> = recs.iter().flat_map(|r| r.4.iter().map(|&v| v as f64)).collect();
        let cloud = FeaturePointCloud::new(pts, 3, feats).unwrap();
        let bytes = encode_rfp(&cloud).unwrap();
        let back = decode_rfp(&bytes).unwrap();
        prop_assert_eq!(&back, &cloud);
        prop_assert_eq!(encode_rfp(&back).unwrap(), bytes);
    }

    #[test]
    fn rwt_round_trip(
        tensors in prop::collection::vec(
            ("[a-z.0-9]{1,24}", prop::collection::vec(1usize..4, 0..4)),
            0..6,
        ),
        seed in any::<u64>()
    ) {
        let mut rng = rangeview::rng::XorShift64Star::new(seed);
        let records: Vec<TensorRecord> = tensors
            .into_iter()
            .map(|(name, dims)| {
                let n = dims.iter().product();
                TensorRecord { name, dims, data: (0..n).map(|_| rng.uniform(-1.0, 1.0) as f32).collect() }
            })
            .collect();
        let bytes = encode_rwt(&records).unwrap();
        let back = decode_rwt(&bytes).unwrap();
        prop_assert_eq!(&back, &records);
        prop_assert_eq!(encode_rwt(&back).unwrap(), bytes);
    }

    #[test]
    fn rrf_round_trip(rows in prop::collection::vec(prop::collection::vec(finite_f32(), 5), 0..10)) {
        let feats: Vec<RoIFeature> = rows
            .iter()
            .map(|r| RoIFeature {
                values: r.iter().map(|&v| v as f64).collect(),
                fine_empty: vec![],
                coarse_empty: vec![],
            })
            .collect();
        let bytes = encode_rrf(&feats, 5).unwrap();
        let dump = decode_rrf(&bytes).unwrap();
        prop_assert_eq!(dump.feature_len, 5);
        prop_assert_eq!(&dump.rows, &rows);
    }

    #[test]
    fn box_text_round_trip(
        c in prop::array::uniform3(-1e3f64..1e3),
        s in prop::array::uniform3(1e-3f64..10.0),
        yaw in -3.1f64..3.1
    ) {
        let b = Box3D::new(c, s, yaw).unwrap();
        prop_assert_eq!(parse_boxes(&format_boxes(&[b])).unwrap(), vec![b]);
    }
}
