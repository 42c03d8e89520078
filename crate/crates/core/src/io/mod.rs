//! Data ingestion and artifact persistence.

pub mod boxes;
pub mod formats;
pub mod kitti;
pub mod synth;

pub use boxes::{format_boxes, parse_boxes, read_boxes, write_boxes};
pub use formats::{
    decode_rfp, decode_rrf, decode_rri, decode_rwt, encode_rfp, encode_rrf, encode_rri,
    encode_rwt, RawPlanes, RoiDump, TensorRecord,
};
pub use kitti::{decode_kitti, encode_kitti, read_kitti_bin, write_kitti_bin};
pub use synth::{gen_synthetic_scene, SynthSpec, SyntheticScene};
