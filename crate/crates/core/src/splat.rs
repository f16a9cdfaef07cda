//! Back-projection of scored clouds into per-view objectness masks.
//!
//! Each point lands on its nearest pixel if it is in front of the camera and
//! no farther than the stored depth plus `depth_eps`. Collisions keep the
//! highest probability.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::objectness::ClassPointCloud;
use crate::projection::project_point;
use crate::scene::{write_u16_png, CameraView, ClassId};
use crate::{Grid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectnessMask {
    pub view_id: String,
    pub class_id: ClassId,
    /// Max splatted probability per pixel; 0 where nothing landed.
    pub values: Grid<f64>,
    pub splatted: Grid<bool>,
}

impl ObjectnessMask {
    pub fn empty(view_id: &str, class_id: ClassId, width: usize, height: usize) -> Self {
        ObjectnessMask {
            view_id: view_id.to_string(),
            class_id,
            values: Grid::filled(width, height, 0.0),
            splatted: Grid::filled(width, height, false),
        }
    }

    pub fn splat_count(&self) -> usize {
        self.splatted.count_set()
    }

    /// Values of splatted pixels, in row-major order.
    pub fn splatted_values(&self) -> Vec<f64> {
        self.values.iter().zip(self.splatted.iter()).filter(|(_, &s)| s).map(|(&v, _)| v).collect()
    }

    /// 16-bit debug image: `round(prob * 65535)`, unsplatted pixels 0.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let raw = self.values.iter().map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
        write_u16_png(path, self.values.width(), self.values.height(), raw)
    }
}

/// One accepted point-to-pixel write.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat {
    /// Index into the cloud's points.
    pub point: usize,
    pub x: usize,
    pub y: usize,
    pub z_cam: f64,
}

pub fn splat_class(cloud: &ClassPointCloud, view: &CameraView, depth_eps: f64) -> ObjectnessMask {
    splat_class_traced(cloud, view, depth_eps).0
}

/// Like [`splat_class`], also returning every accepted write for auditing.
pub fn splat_class_traced(cloud: &ClassPointCloud, view: &CameraView, depth_eps: f64) -> (ObjectnessMask, Vec<Splat>) {
    let mut mask = ObjectnessMask::empty(&view.id, cloud.class_id, view.width(), view.height());
    let mut trace = Vec::new();
    for (i, point) in cloud.points.iter().enumerate() {
        let Some(sample) = project_point(view, &point.pos) else { continue };
        let Some((x, y)) = sample.pixel(view.width(), view.height()) else { continue };
        let Some(depth) = view.depth.get(x, y) else { continue };
        if sample.z_cam > depth + depth_eps {
            continue;
        }
        let value = &mut mask.values[(x, y)];
        *value = value.max(point.prob);
        mask.splatted[(x, y)] = true;
        trace.push(Splat { point: i, x, y, z_cam: sample.z_cam });
    }
    (mask, trace)
}

/// Splats every cloud into every view, keyed by `(view_id, class_id)`.
pub fn splat_all(
    clouds: &[ClassPointCloud],
    views: &[CameraView],
    depth_eps: f64,
) -> BTreeMap<(String, ClassId), ObjectnessMask> {
    let jobs: Vec<(&CameraView, &ClassPointCloud)> =
        views.iter().flat_map(|v| clouds.iter().map(move |c| (v, c))).collect();
    jobs.into_par_iter()
        .map(|(view, cloud)| ((view.id.clone(), cloud.class_id), splat_class(cloud, view, depth_eps)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}
