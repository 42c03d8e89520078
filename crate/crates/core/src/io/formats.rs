//! Little-endian binary artifact formats.
//!
//! ```text
//! RRI1  range image   "RRI1" u32 h, u32 w, u32 planes, planes*h*w f32 (plane-major,
//!                     row-major), then h*w mask bytes (0 or 1)
//! RFP1  feature cloud "RFP1" u32 n, u32 d_f, then n records of f32 x, y, z, i, d_f features
//! RWT1  weights       "RWT1" u32 count, then per record: u16 name length, UTF-8 name,
//!                     u8 rank, rank*u32 dims, prod(dims) f32 row-major
//! RRF1  RoI features  "RRF1" u32 boxes, u32 feature length, boxes*length f32
//! ```

use crate::error::{Error, Result};
use crate::sgrid::RoIFeature;
use crate::types::{FeaturePointCloud, Point, RangeImage, SensorModel};

pub const RRI_MAGIC: &[u8; 4] = b"RRI1";
pub const RFP_MAGIC: &[u8; 4] = b"RFP1";
pub const RWT_MAGIC: &[u8; 4] = b"RWT1";
pub const RRF_MAGIC: &[u8; 4] = b"RRF1";

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], magic: &[u8; 4], what: &'static str) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != magic {
            return Err(Error::format(format!(
                "{what}: missing `{}` magic",
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(Self {
            bytes,
            pos: 4,
            what,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(format!("{}: truncated at byte {}", self.what, self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| {
            Error::format(format!("{}: size overflow", self.what))
        })?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(format!(
                "{}: {} trailing bytes",
                self.what,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

/// An RRI1 payload independent of any sensor model. Also used for
/// bird's-eye-view maps (`height = ny`, `width = nx`).
#[derive(Debug, Clone, PartialEq)]
pub struct RawPlanes {
    pub height: usize,
    pub width: usize,
    pub planes: usize,
    pub data: Vec<f32>,
    pub mask: Vec<bool>,
}

impl RawPlanes {
    pub fn from_image(img: &RangeImage) -> Self {
        Self {
            height: img.height(),
            width: img.width(),
            planes: img.num_planes(),
            data: img.data().iter().map(|&v| v as f32).collect(),
            mask: img.valid_mask().to_vec(),
        }
    }

    /// Attaches a sensor model; the image size must agree with it.
    pub fn into_range_image(self, sensor: &SensorModel) -> Result<RangeImage> {
        if self.height != sensor.height() || self.width != sensor.width() {
            return Err(Error::invalid(format!(
                "image is {}x{}, sensor expects {}x{}",
                self.height,
                self.width,
                sensor.height(),
                sensor.width()
            )));
        }
        let data = self.data.into_iter().map(f64::from).collect();
        RangeImage::from_parts(*sensor, self.planes, data, self.mask)
    }
}

pub fn encode_rri(raw: &RawPlanes) -> Result<Vec<u8>> {
    let n = raw.height * raw.width;
    if raw.data.len() != raw.planes * n || raw.mask.len() != n {
        return Err(Error::invalid("RRI1: plane data does not match the image size"));
    }
    let mut out = Vec::with_capacity(16 + raw.data.len() * 4 + n);
    out.extend_from_slice(RRI_MAGIC);
    put_u32(&mut out, raw.height)?;
    put_u32(&mut out, raw.width)?;
    put_u32(&mut out, raw.planes)?;
    for v in &raw.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend(raw.mask.iter().map(|&b| b as u8));
    Ok(out)
}

pub fn decode_rri(bytes: &[u8]) -> Result<RawPlanes> {
    let mut r = Reader::new(bytes, RRI_MAGIC, "RRI1")?;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let planes = r.u32()? as usize;
    let n = height
        .checked_mul(width)
        .ok_or_else(|| Error::format("RRI1: image size overflow"))?;
    let data = r.f32s(planes.checked_mul(n).ok_or_else(|| Error::format("RRI1: size overflow"))?)?;
    let mask = r
        .take(n)?
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::format(format!("RRI1: mask byte {i} is {other}, expected 0 or 1"))),
        })
        .collect::<Result<_>>()?;
    r.finish()?;
    Ok(RawPlanes {
        height,
        width,
        planes,
        data,
        mask,
    })
}

pub fn encode_rfp(cloud: &FeaturePointCloud) -> Result<Vec<u8>> {
    let d = cloud.dim();
    let mut out = Vec::with_capacity(12 + cloud.len() * (4 + d) * 4);
    out.extend_from_slice(RFP_MAGIC);
    put_u32(&mut out, cloud.len())?;
    put_u32(&mut out, d)?;
    for (i, p) in cloud.points().iter().enumerate() {
        for v in [p.x, p.y, p.z, p.intensity] {
            put_f32(&mut out, v);
        }
        for &f in cloud.feature(i) {
            put_f32(&mut out, f);
        }
    }
    Ok(out)
}

pub fn decode_rfp(bytes: &[u8]) -> Result<FeaturePointCloud> {
    let mut r = Reader::new(bytes, RFP_MAGIC, "RFP1")?;
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let mut points = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n * d);
    for index in 0..n {
        let rec = r.f32s(4 + d)?;
        if rec.iter().any(|v| !v.is_finite()) {
            return Err(Error::Record {
                index,
                message: "non-finite value".into(),
            });
        }
        points.push(
            Point::new(rec[0] as f64, rec[1] as f64, rec[2] as f64, rec[3] as f64).map_err(
                |e| Error::Record {
                    index,
                    message: e.to_string(),
                },
            )?,
        );
        features.extend(rec[4..].iter().map(|&v| v as f64));
    }
    r.finish()?;
    FeaturePointCloud::new(points, d, features)
}

/// One named tensor of a weights file.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode_rwt(records: &[TensorRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(RWT_MAGIC);
    put_u32(&mut out, records.len())?;
    for rec in records {
        let name = rec.name.as_bytes();
        let len = u16::try_from(name.len())
            .map_err(|_| Error::format(format!("RWT1: tensor name `{}` too long", rec.name)))?;
        let rank = u8::try_from(rec.dims.len())
            .map_err(|_| Error::format(format!("RWT1: tensor `{}` rank too high", rec.name)))?;
        let count: usize = rec.dims.iter().product();
        if count != rec.data.len() {
            return Err(Error::invalid(format!(
                "RWT1: tensor `{}` has {} values for dims {:?}",
                rec.name,
                rec.data.len(),
                rec.dims
            )));
        }
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(rank);
        for &d in &rec.dims {
            put_u32(&mut out, d)?;
        }
        for v in &rec.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_rwt(bytes: &[u8]) -> Result<Vec<TensorRecord>> {
    let mut r = Reader::new(bytes, RWT_MAGIC, "RWT1")?;
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for index in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Record {
                index,
                message: "tensor name is not UTF-8".into(),
            })?
            .to_string();
        let rank = r.u8()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let total = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format("RWT1: tensor size overflow"))?;
        let data = r.f32s(total)?;
        records.push(TensorRecord { name, dims, data });
    }
    r.finish()?;
    Ok(records)
}

/// Decoded RRF1 payload.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiDump {
    pub feature_len: usize,
    pub rows: Vec<Vec<f32>>,
}

pub fn encode_rrf(features: &[RoIFeature], feature_len: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + features.len() * feature_len * 4);
    out.extend_from_slice(RRF_MAGIC);
    put_u32(&mut out, features.len())?;
    put_u32(&mut out, feature_len)?;
    for (i, f) in features.iter().enumerate() {
        if f.values.len() != feature_len {
            return Err(Error::invalid(format!(
                "RRF1: box {i} has {} values, expected {feature_len}",
                f.values.len()
            )));
        }
        for &v in &f.values {
            put_f32(&mut out, v);
        }
    }
    Ok(out)
}

pub fn decode_rrf(bytes: &[u8]) -> Result<RoiDump> {
    let mut r = Reader::new(bytes, RRF_MAGIC, "RRF1")?;
    let boxes = r.u32()? as usize;
    let feature_len = r.u32()? as usize;
    let rows = (0..boxes)
        .map(|_| r.f32s(feature_len))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(RoiDump { feature_len, rows })
}
