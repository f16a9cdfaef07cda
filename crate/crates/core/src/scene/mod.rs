//! Multi-view RGB-D scene model: cameras, depth buffers, and region labels.

mod io;

use std::collections::BTreeMap;

use image::RgbImage;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Grid, Result};

pub use io::{
    label_map_to_regions, load_label_maps, load_scene, read_depth_sidecar, save_label_maps, save_proposals, save_scene,
    write_depth_sidecar, write_u16_png,
};

/// Semantic class index. `0` is background; labeled classes start at `1`.
pub type ClassId = u8;

/// Per-pixel class ids, `0` for background.
pub type LabelMap = Grid<ClassId>;

pub const BACKGROUND: ClassId = 0;

const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    /// Focal length in pixels.
    pub f: f64,
    pub px: f64,
    pub py: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.f.is_finite() && self.f > 0.0) {
            return Err(Error::Validation(format!("focal length must be positive, got {}", self.f)));
        }
        if !(self.px.is_finite() && self.py.is_finite()) {
            return Err(Error::Validation("principal point must be finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation(format!(
                "image size must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Camera extrinsics: `rotation` maps world directions into the camera frame
/// and `center` is the camera position in world coordinates, so a world point
/// `p` has camera coordinates `rotation * (p - center)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub center: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        let pose = Pose { rotation, center };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Pose { rotation: Matrix3::identity(), center: Vector3::zeros() }
    }

    /// Camera at `eye` looking at `target`. Image x runs along `forward × up`
    /// and image y runs downward, opposite `up`.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() == 0.0 {
            return Err(Error::Validation("look-at target coincides with the camera".into()));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::Validation("viewing direction is parallel to the up vector".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Pose::new(rotation, eye)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rotation.iter().chain(self.center.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("pose contains non-finite values".into()));
        }
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        if err > ROTATION_TOL {
            return Err(Error::Validation(format!("rotation is not orthonormal (max |RᵀR - I| = {err:e})")));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::Validation(format!("rotation determinant must be 1, got {det}")));
        }
        Ok(())
    }
}

/// Camera-frame z-depth in meters. Non-positive entries mark missing depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    values: Grid<f64>,
}

impl DepthMap {
    pub fn new(values: Grid<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("depth map contains non-finite values".into()));
        }
        Ok(DepthMap { values })
    }

    /// Decodes raw sensor values as `raw * scale` meters; raw `0` is invalid.
    pub fn from_raw(width: usize, height: usize, raw: &[u16], scale: f64) -> Result<Self> {
        if raw.len() != width * height {
            return Err(Error::Validation("raw depth length does not match image size".into()));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Validation(format!("depth_scale must be positive, got {scale}")));
        }
        let values = raw.iter().map(|&r| f64::from(r) * scale).collect();
        Ok(DepthMap { values: Grid::from_vec(width, height, values) })
    }

    /// Quantizes to raw sensor units. Invalid pixels become `0`; valid depths
    /// clamp to `1..=u16::MAX`.
    pub fn to_raw(&self, scale: f64) -> Vec<u16> {
        self.values
            .iter()
            .map(|&d| if d > 0.0 { (d / scale).round().clamp(1.0, f64::from(u16::MAX)) as u16 } else { 0 })
            .collect()
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    /// Depth at an integer pixel, `None` when out of bounds or invalid.
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.values.get(x, y).copied().filter(|&d| d > 0.0)
    }

    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }
}

#[derive(Debug, Clone)]
pub struct CameraView {
    pub id: String,
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub depth: DepthMap,
    /// Color image used by the CRF appearance kernel.
    pub rgb: Option<RgbImage>,
}

impl CameraView {
    pub fn validate(&self) -> Result<()> {
        let ctx = |e: Error| Error::Validation(format!("view {}: {e}", self.id));
        self.intrinsics.validate().map_err(ctx)?;
        self.pose.validate().map_err(ctx)?;
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        if (self.depth.width(), self.depth.height()) != (w, h) {
            return Err(Error::DimensionMismatch {
                context: format!("view {} depth", self.id),
                expected_width: w,
                expected_height: h,
                width: self.depth.width(),
                height: self.depth.height(),
            });
        }
        if let Some(rgb) = &self.rgb {
            if (rgb.width() as usize, rgb.height() as usize) != (w, h) {
                return Err(Error::DimensionMismatch {
                    context: format!("view {} rgb", self.id),
                    expected_width: w,
                    expected_height: h,
                    width: rgb.width() as usize,
                    height: rgb.height() as usize,
                });
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }
}

/// A labeled pixel region. Boxes are half-open: `x0 <= x < x1`, `y0 <= y < y1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Box { x0: usize, y0: usize, x1: usize, y1: usize },
    Mask(Grid<bool>),
}

impl Region {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        match self {
            Region::Box { x0, y0, x1, y1 } => (*x0..*x1).contains(&x) && (*y0..*y1).contains(&y),
            Region::Mask(mask) => mask.get(x, y).copied().unwrap_or(false),
        }
    }

    /// Region pixels on a sampling grid of the given stride. Boxes sample from
    /// their own top-left corner; masks sample on the image-aligned grid.
    pub fn sample_pixels(&self, stride: usize) -> Vec<(usize, usize)> {
        let stride = stride.max(1);
        match self {
            Region::Box { x0, y0, x1, y1 } => {
                (*y0..*y1).step_by(stride).flat_map(|y| (*x0..*x1).step_by(stride).map(move |x| (x, y))).collect()
            }
            Region::Mask(mask) => (0..mask.height())
                .step_by(stride)
                .flat_map(|y| (0..mask.width()).step_by(stride).map(move |x| (x, y)))
                .filter(|&(x, y)| mask[(x, y)])
                .collect(),
        }
    }

    pub fn to_mask(&self, width: usize, height: usize) -> Grid<bool> {
        Grid::from_fn(width, height, |x, y| self.contains(x, y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionLabel {
    pub view_id: String,
    pub class_id: ClassId,
    pub region: Region,
}

impl RegionLabel {
    pub fn new_box(view_id: impl Into<String>, class_id: ClassId, x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        RegionLabel { view_id: view_id.into(), class_id, region: Region::Box { x0, y0, x1, y1 } }
    }

    pub fn validate(&self, view: &CameraView) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("label on view {}: {msg}", self.view_id)));
        if self.class_id == BACKGROUND {
            return fail("class id 0 is reserved for background".into());
        }
        match &self.region {
            &Region::Box { x0, y0, x1, y1 } => {
                if !(x0 < x1 && x1 <= view.width() && y0 < y1 && y1 <= view.height()) {
                    return fail(format!(
                        "box [{x0}, {y0}, {x1}, {y1}) is empty or exceeds {}x{}",
                        view.width(),
                        view.height()
                    ));
                }
            }
            Region::Mask(mask) => {
                if mask.dims() != (view.width(), view.height()) {
                    return fail(format!(
                        "mask is {}x{}, view is {}x{}",
                        mask.width(),
                        mask.height(),
                        view.width(),
                        view.height()
                    ));
                }
                if mask.count_set() == 0 {
                    return fail("mask has no set pixels".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub views: Vec<CameraView>,
    pub labels: Vec<RegionLabel>,
    pub classes: BTreeMap<ClassId, String>,
    /// Meters per raw depth unit in the on-disk encoding.
    pub depth_scale: f64,
}

pub const DEFAULT_DEPTH_SCALE: f64 = 0.001;

impl Scene {
    pub fn new(
        views: Vec<CameraView>,
        labels: Vec<RegionLabel>,
        classes: BTreeMap<ClassId, String>,
        depth_scale: f64,
    ) -> Result<Self> {
        let scene = Scene { views, labels, classes, depth_scale };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.depth_scale.is_finite() && self.depth_scale > 0.0) {
            return Err(Error::Validation(format!("depth_scale must be positive, got {}", self.depth_scale)));
        }
        for (expected, &id) in (1..).zip(self.classes.keys()) {
            if id != expected {
                return Err(Error::Validation(format!(
                    "class ids must be contiguous from 1; found {id} where {expected} was expected"
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for view in &self.views {
            if !seen.insert(view.id.as_str()) {
                return Err(Error::Validation(format!("duplicate view id {}", view.id)));
            }
            view.validate()?;
        }
        self.validate_labels(&self.labels)
    }

    /// Checks that every label names an existing view and a known class.
    pub fn validate_labels(&self, labels: &[RegionLabel]) -> Result<()> {
        for label in labels {
            let view = self
                .view(&label.view_id)
                .ok_or_else(|| Error::Validation(format!("label references unknown view {}", label.view_id)))?;
            if !self.classes.contains_key(&label.class_id) {
                return Err(Error::Validation(format!(
                    "label on view {} uses unknown class {}",
                    label.view_id, label.class_id
                )));
            }
            label.validate(view)?;
        }
        Ok(())
    }

    pub fn view(&self, id: &str) -> Option<&CameraView> {
        self.views.iter().find(|v| v.id == id)
    }

    pub fn labels_for_view<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a RegionLabel> + 'a {
        self.labels.iter().filter(move |l| l.view_id == id)
    }
}
