//! KITTI velodyne `.bin` scans: consecutive little-endian f32 `(x, y, z, intensity)`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::types::Point;

pub fn decode_kitti(bytes: &[u8]) -> Result<Vec<Point>> {
    if !bytes.len().is_multiple_of(16) {
        return Err(Error::format(format!(
            "KITTI scan length {} is not a multiple of 16",
            bytes.len()
        )));
    }
    let mut clamped = 0usize;
    let points = bytes
        .chunks_exact(16)
        .enumerate()
        .map(|(index, rec)| {
            let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().expect("4 bytes"));
            let (x, y, z, i) = (f(0), f(1), f(2), f(3));
            if !(x.is_finite() && y.is_finite() && z.is_finite() && i.is_finite()) {
                return Err(Error::Record {
                    index,
                    message: "non-finite value".into(),
                });
            }
            if !Point::intensity_in_range(i as f64) {
                clamped += 1;
            }
            Point::new(x as f64, y as f64, z as f64, i as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    if clamped > 0 {
        log::warn!("clamped {clamped} intensities into [0, 1]");
    }
    Ok(points)
}

pub fn encode_kitti(points: &[Point]) -> Vec<u8> {
    let mut out = Vec::with_capacity(points.len() * 16);
    for p in points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_kitti_bin(path: impl AsRef<Path>) -> Result<Vec<Point>> {
    decode_kitti(&std::fs::read(path)?)
}

pub fn write_kitti_bin(path: impl AsRef<Path>, points: &[Point]) -> Result<()> {
    std::fs::write(path, encode_kitti(points))?;
    Ok(())
}
