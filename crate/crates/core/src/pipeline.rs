//! End-to-end proposal generation and the recursive refinement step.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::objectness::{build_class_cloud, normalize_scores, score_points, ClassPointCloud, ScoringParams};
use crate::refine::{densify_class, fuse_classes, CrfParams, RefineParams, SegmentProposal};
use crate::scene::{label_map_to_regions, ClassId, LabelMap, Region, RegionLabel, Scene};
use crate::splat::{splat_all, ObjectnessMask};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Pixel sampling stride when lifting labeled regions.
    pub stride: usize,
    /// Depth slack in meters for the visibility tests.
    pub depth_eps: f64,
    pub close_radius: usize,
    pub unary_confidence: f64,
    pub crf: CrfParams,
    /// Rounds of mask-and-relift performed by [`recursive_refine`].
    pub iterations: usize,
    /// Apply the depth visibility test while scoring, not only while splatting.
    pub occlusion_in_scoring: bool,
    /// How masked predictions enter a recursive step.
    pub recursive_input: RecursiveInput,
}

/// Labels lifted by a recursive step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecursiveInput {
    /// Masked predictions together with the original regions.
    #[default]
    Augment,
    /// Masked predictions alone.
    Replace,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let refine = RefineParams::default();
        PipelineConfig {
            stride: 1,
            depth_eps: 0.02,
            close_radius: refine.close_radius,
            unary_confidence: refine.unary_confidence,
            crf: refine.crf,
            iterations: 1,
            occlusion_in_scoring: false,
            recursive_input: RecursiveInput::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads and validates a TOML or JSON config, chosen by file extension
    /// (TOML otherwise).
    pub fn from_file(path: &Path) -> Result<Self> {
        let cfg = Self::parse_file(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Like [`from_file`](Self::from_file) without value checks, for callers
    /// that override keys before validating.
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::malformed(path, e))
        } else {
            toml::from_str(&text).map_err(|e| Error::malformed(path, e))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if !(self.depth_eps.is_finite() && self.depth_eps >= 0.0) {
            return Err(Error::Config(format!("depth_eps must be non-negative, got {}", self.depth_eps)));
        }
        self.refine_params().validate()
    }

    pub fn refine_params(&self) -> RefineParams {
        RefineParams { close_radius: self.close_radius, unary_confidence: self.unary_confidence, crf: self.crf }
    }

    pub fn scoring_params(&self) -> ScoringParams {
        ScoringParams { depth_eps: self.depth_eps, occlusion_aware: self.occlusion_in_scoring }
    }
}

fn label_classes(labels: &[RegionLabel]) -> Vec<ClassId> {
    labels.iter().map(|l| l.class_id).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Builds, scores and normalizes one cloud per labeled class, in ascending
/// class order.
pub fn lift_clouds(scene: &Scene, labels: &[RegionLabel], cfg: &PipelineConfig) -> Result<Vec<ClassPointCloud>> {
    cfg.validate()?;
    scene.validate_labels(labels)?;
    label_classes(labels)
        .into_iter()
        .map(|class_id| {
            let mut cloud = build_class_cloud(scene, labels, class_id, cfg.stride)?;
            score_points(&mut cloud, scene, labels, cfg.scoring_params())?;
            normalize_scores(&mut cloud);
            Ok(cloud)
        })
        .collect()
}

/// Proposals for every view of the scene, labeled or not.
pub fn generate_proposals(
    scene: &Scene,
    labels: &[RegionLabel],
    cfg: &PipelineConfig,
) -> Result<BTreeMap<String, SegmentProposal>> {
    if labels.is_empty() {
        return Err(Error::Validation("no region labels to lift".into()));
    }
    let clouds = lift_clouds(scene, labels, cfg)?;
    let masks = splat_all(&clouds, &scene.views, cfg.depth_eps);
    densify_views(scene, &masks, &cfg.refine_params())
}

/// Densifies and fuses the objectness masks of each view.
pub fn densify_views(
    scene: &Scene,
    masks: &BTreeMap<(String, ClassId), ObjectnessMask>,
    params: &RefineParams,
) -> Result<BTreeMap<String, SegmentProposal>> {
    scene
        .views
        .par_iter()
        .map(|view| {
            let dense = masks
                .iter()
                .filter(|((id, _), _)| *id == view.id)
                .map(|(_, mask)| densify_class(mask, view.rgb.as_ref(), params))
                .collect::<Result<Vec<_>>>()?;
            Ok((view.id.clone(), fuse_classes(view.width(), view.height(), &dense)?))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().collect())
}

/// Clears predicted pixels of class `c` that fall outside every region of
/// class `c`. With no regions at all the prediction passes through.
pub fn mask_predictions(pred: &LabelMap, boxes: &[RegionLabel]) -> LabelMap {
    if boxes.is_empty() {
        return pred.clone();
    }
    let mut out = pred.clone();
    let (w, h) = pred.dims();
    for y in 0..h {
        for x in 0..w {
            let c = pred[(x, y)];
            if c != 0 && !boxes.iter().any(|b| b.class_id == c && b.region.contains(x, y)) {
                out[(x, y)] = 0;
            }
        }
    }
    out
}

/// The box labels of a label list, i.e. the regions used to mask predictions.
pub fn box_labels(labels: &[RegionLabel]) -> Vec<RegionLabel> {
    labels.iter().filter(|l| matches!(l.region, Region::Box { .. })).cloned().collect()
}

/// One recursive step: mask each prediction with its view's boxes, turn the
/// surviving classes into mask labels, and lift those, alongside the boxes or
/// in their place depending on `cfg.recursive_input`.
pub fn recursive_iterate(
    scene: &Scene,
    predictions: &BTreeMap<String, LabelMap>,
    boxes: &[RegionLabel],
    cfg: &PipelineConfig,
) -> Result<BTreeMap<String, SegmentProposal>> {
    if predictions.is_empty() {
        return Err(Error::Validation("no predictions given".into()));
    }
    let mut labels = Vec::new();
    for (id, pred) in predictions {
        let view = scene.view(id).ok_or_else(|| Error::Validation(format!("prediction for unknown view {id}")))?;
        if pred.dims() != (view.width(), view.height()) {
            return Err(Error::DimensionMismatch {
                context: format!("prediction for view {id}"),
                expected_width: view.width(),
                expected_height: view.height(),
                width: pred.width(),
                height: pred.height(),
            });
        }
        let view_boxes: Vec<RegionLabel> = boxes.iter().filter(|b| b.view_id == *id).cloned().collect();
        labels.extend(label_map_to_regions(id, &mask_predictions(pred, &view_boxes)));
    }
    if labels.is_empty() {
        return Err(Error::Validation("masked predictions are empty; nothing to lift".into()));
    }
    if cfg.recursive_input == RecursiveInput::Augment {
        labels.extend(boxes.iter().cloned());
    }
    generate_proposals(scene, &labels, cfg)
}

/// Runs `cfg.iterations` recursive steps (at least one), feeding each round's
/// proposals back as the next round's predictions.
pub fn recursive_refine(
    scene: &Scene,
    predictions: &BTreeMap<String, LabelMap>,
    boxes: &[RegionLabel],
    cfg: &PipelineConfig,
) -> Result<BTreeMap<String, SegmentProposal>> {
    let mut current = recursive_iterate(scene, predictions, boxes, cfg)?;
    for _ in 1..cfg.iterations {
        current = recursive_iterate(scene, &current, boxes, cfg)?;
    }
    Ok(current)
}
