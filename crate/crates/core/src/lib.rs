//! Dense segment proposals from sparse bounding boxes and multi-view RGB-D data.
//!
//! Labeled pixels are unprojected into a shared world frame, each 3D point is
//! scored by how many labeled regions recapture it from other viewpoints, and
//! the scored cloud is splatted back into every view (labeled or not) under a
//! depth-buffer occlusion test. Sparse splats are then densified by Otsu
//! binarization, morphological closing and a fully connected CRF.
//!
//! The [`synth`] module renders analytic RGB-D scenes with exact ground truth,
//! and [`eval`] scores proposals by per-class IoU.

mod error;
pub mod eval;
pub mod grid;
pub mod objectness;
pub mod pipeline;
pub mod projection;
pub mod refine;
pub mod scene;
pub mod splat;
pub mod synth;

pub use error::{Error, Result};
pub use eval::{evaluate, ClassCounts, EvalReport};
pub use grid::Grid;
pub use objectness::{build_class_cloud, normalize_scores, score_points, ClassPointCloud, ScoredPoint};
pub use pipeline::{generate_proposals, mask_predictions, recursive_iterate, PipelineConfig, RecursiveInput};
pub use projection::{depth_at, project_point, unproject_pixel, PixelSample, WorldPoint};
pub use refine::{
    crf_refine, densify_class, fuse_classes, morph_close, otsu_threshold, CrfParams, DenseClass, SegmentProposal,
};
pub use scene::{CameraView, ClassId, DepthMap, Intrinsics, LabelMap, Pose, Region, RegionLabel, Scene};
pub use splat::{splat_all, splat_class, ObjectnessMask};
