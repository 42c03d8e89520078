//! Range-view LiDAR processing for two-stage 3D object detection.
//!
//! The crate covers the geometric and algorithmic core of a detector that
//! extracts features on the 2D range image and then lifts every pixel back to
//! a 3D feature point:
//!
//! - [`range_geometry`]: the exact pixel/point mapping, range-image
//!   construction and feature point redemption.
//! - [`rvfe`]: the BasicBlock encoder and the two-branch hierarchical-dilated
//!   meta kernel, with an analytic backward pass.
//! - [`pointops`]: furthest point sampling, ball query, PointNet aggregation,
//!   voxelization and bird's-eye-view flattening.
//! - [`sgrid`]: synchronous-grid RoI pooling over rotated boxes and the
//!   refinement head.
//! - [`io`] and [`pipeline`]: binary formats, synthetic scenes and the
//!   staged end-to-end run.

pub mod config;
pub mod error;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod pointops;
pub mod range_geometry;
pub mod rng;
pub mod rvfe;
pub mod sgrid;
pub mod types;
pub mod weights;

pub use config::{load_config, PipelineConfig};
pub use error::{Error, Result};
pub use types::{Box3D, FeaturePointCloud, Point, RangeImage, SensorModel};
