//! Per-class point clouds lifted from labeled regions, scored by multi-view
//! recapture.
//!
//! A point's score counts the labeled regions of its class (across every
//! view) that it projects back into while visible. Scores are normalized per
//! class by the maximum score, so the best-supported points get probability 1.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::projection::{project_point, unproject_pixel, WorldPoint};
use crate::scene::{CameraView, ClassId, RegionLabel, Scene};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPoint {
    pub pos: WorldPoint,
    pub class_id: ClassId,
    /// Number of labeled regions that recapture this point.
    pub score: u32,
    /// `score / max score` over the class; 0 before normalization.
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassPointCloud {
    pub class_id: ClassId,
    pub points: Vec<ScoredPoint>,
}

impl ClassPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_score(&self) -> u32 {
        self.points.iter().map(|p| p.score).max().unwrap_or(0)
    }

    /// Writes `x y z score prob`, one point per line.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.points.len() * 48);
        for p in &self.points {
            writeln!(out, "{} {} {} {} {}", p.pos.x, p.pos.y, p.pos.z, p.score, p.prob).expect("write to Vec");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Visibility handling when scoring points against labeled regions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringParams {
    /// Slack in meters allowed between a point's camera depth and the stored depth.
    pub depth_eps: f64,
    /// When set, a region only recaptures points that are not hidden behind
    /// its view's stored depth. Off by default: a region recaptures any point
    /// that projects inside it, and depth maps are not consulted.
    pub occlusion_aware: bool,
}

impl Default for ScoringParams {
    fn default() -> Self {
        ScoringParams { depth_eps: 0.02, occlusion_aware: false }
    }
}

/// Unprojects every stride-sampled pixel with valid depth of every label of
/// `class_id`. Scores start at 0 and probabilities at 0.
pub fn build_class_cloud(
    scene: &Scene,
    labels: &[RegionLabel],
    class_id: ClassId,
    stride: usize,
) -> Result<ClassPointCloud> {
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let mut points = Vec::new();
    for label in labels.iter().filter(|l| l.class_id == class_id) {
        let view = scene
            .view(&label.view_id)
            .ok_or_else(|| Error::Validation(format!("label references unknown view {}", label.view_id)))?;
        for (x, y) in label.region.sample_pixels(stride) {
            let Some(d) = view.depth.get(x, y) else { continue };
            let pos = unproject_pixel(view, x as f64, y as f64, d)?;
            points.push(ScoredPoint { pos, class_id, score: 0, prob: 0.0 });
        }
    }
    Ok(ClassPointCloud { class_id, points })
}

/// Whether `label` (on `view`) recaptures world point `p`.
pub fn recaptures(view: &CameraView, label: &RegionLabel, p: &WorldPoint, params: ScoringParams) -> bool {
    let Some(sample) = project_point(view, p) else { return false };
    let Some((x, y)) = sample.pixel(view.width(), view.height()) else { return false };
    if !label.region.contains(x, y) {
        return false;
    }
    if !params.occlusion_aware {
        return true;
    }
    match view.depth.get(x, y) {
        Some(d) => sample.z_cam <= d + params.depth_eps,
        None => false,
    }
}

/// Recomputes every point's score against the labels of the cloud's class.
pub fn score_points(
    cloud: &mut ClassPointCloud,
    scene: &Scene,
    labels: &[RegionLabel],
    params: ScoringParams,
) -> Result<()> {
    let mut bound = Vec::new();
    for label in labels.iter().filter(|l| l.class_id == cloud.class_id) {
        let view = scene
            .view(&label.view_id)
            .ok_or_else(|| Error::Validation(format!("label references unknown view {}", label.view_id)))?;
        bound.push((view, label));
    }
    cloud.points.par_iter_mut().for_each(|point| {
        point.score = bound.iter().filter(|(view, label)| recaptures(view, label, &point.pos, params)).count() as u32;
    });
    Ok(())
}

/// `prob = score / max score`. No-op on an empty cloud or when all scores are 0.
pub fn normalize_scores(cloud: &mut ClassPointCloud) {
    let max = cloud.max_score();
    if max == 0 {
        return;
    }
    let max = f64::from(max);
    for p in &mut cloud.points {
        p.prob = f64::from(p.score) / max;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{DepthMap, Intrinsics, Pose};
    use crate::Grid;
    use nalgebra::Point3;
    use std::collections::BTreeMap;

    fn flat_view(id: &str, depth: Grid<f64>) -> CameraView {
        let (w, h) = depth.dims();
        CameraView {
            id: id.into(),
            intrinsics: Intrinsics { f: 4.0, px: w as f64 / 2.0, py: h as f64 / 2.0, width: w, height: h },
            pose: Pose::identity(),
            depth: DepthMap::new(depth).unwrap(),
            rgb: None,
        }
    }

    fn scene_with(views: Vec<CameraView>, labels: Vec<RegionLabel>) -> Scene {
        let classes = BTreeMap::from([(1, "a".to_string()), (2, "b".to_string())]);
        Scene::new(views, labels, classes, 0.001).unwrap()
    }

    fn cloud_of(scores: &[u32]) -> ClassPointCloud {
        ClassPointCloud {
            class_id: 1,
            points: scores
                .iter()
                .map(|&score| ScoredPoint { pos: Point3::origin(), class_id: 1, score, prob: 0.0 })
                .collect(),
        }
    }

    #[test]
    fn two_by_two_box_gives_four_points() {
        let labels = vec![RegionLabel::new_box("v", 1, 1, 1, 3, 3)];
        let scene = scene_with(vec![flat_view("v", Grid::filled(6, 4, 2.0))], labels.clone());
        assert_eq!(build_class_cloud(&scene, &labels, 1, 1).unwrap().len(), 4);
        assert_eq!(build_class_cloud(&scene, &labels, 2, 1).unwrap().len(), 0);
    }

    #[test]
    fn invalid_depth_pixels_are_skipped() {
        let mut depth = Grid::filled(6, 4, 2.0);
        depth[(2, 2)] = 0.0;
        let labels = vec![RegionLabel::new_box("v", 1, 1, 1, 3, 3)];
        let scene = scene_with(vec![flat_view("v", depth)], labels.clone());
        assert_eq!(build_class_cloud(&scene, &labels, 1, 1).unwrap().len(), 3);
    }

    #[test]
    fn zero_stride_is_rejected() {
        let labels = vec![RegionLabel::new_box("v", 1, 1, 1, 3, 3)];
        let scene = scene_with(vec![flat_view("v", Grid::filled(6, 4, 2.0))], labels.clone());
        assert!(build_class_cloud(&scene, &labels, 1, 0).is_err());
    }

    #[test]
    fn points_recapture_their_own_box() {
        let labels = vec![RegionLabel::new_box("v", 1, 0, 0, 4, 3)];
        let scene = scene_with(vec![flat_view("v", Grid::filled(6, 4, 2.0))], labels.clone());
        let mut cloud = build_class_cloud(&scene, &labels, 1, 1).unwrap();
        score_points(&mut cloud, &scene, &labels, ScoringParams::default()).unwrap();
        assert!(cloud.points.iter().all(|p| p.score == 1));
    }

    #[test]
    fn occluded_point_is_not_recaptured() {
        let view = flat_view("v", Grid::filled(6, 4, 2.0));
        let label = RegionLabel::new_box("v", 1, 0, 0, 6, 4);
        let params = ScoringParams { occlusion_aware: true, ..Default::default() };
        let on_surface = unproject_pixel(&view, 3.0, 2.0, 2.0).unwrap();
        let behind = unproject_pixel(&view, 3.0, 2.0, 2.0 + 0.021).unwrap();
        let within_slack = unproject_pixel(&view, 3.0, 2.0, 2.0 + 0.019).unwrap();
        assert!(recaptures(&view, &label, &on_surface, params));
        assert!(!recaptures(&view, &label, &behind, params));
        assert!(recaptures(&view, &label, &within_slack, params));
        let blind = ScoringParams { occlusion_aware: false, ..params };
        assert!(recaptures(&view, &label, &behind, blind));
    }

    #[test]
    fn normalization_divides_by_max() {
        let mut cloud = cloud_of(&[1, 2, 4]);
        normalize_scores(&mut cloud);
        let probs: Vec<f64> = cloud.points.iter().map(|p| p.prob).collect();
        assert_eq!(probs, vec![0.25, 0.5, 1.0]);

        let mut flat = cloud_of(&[1, 1, 1]);
        normalize_scores(&mut flat);
        assert!(flat.points.iter().all(|p| p.prob == 1.0));

        let mut empty = cloud_of(&[]);
        normalize_scores(&mut empty);
        assert!(empty.is_empty());
    }
}
