//! Densification of sparse objectness masks into per-view segment proposals.
//!
//! Per class: Otsu binarization of the splatted probabilities, morphological
//! closing, then a two-label CRF whose unary comes from the closed mask. The
//! per-class results of a view are fused into one label map.

mod crf;
mod morph;
mod otsu;

use image::RgbImage;
use serde::{Deserialize, Serialize};

pub use crf::{crf_refine, crf_refine_exact, CrfParams, MAX_PALETTE};
pub use morph::{dilate, erode, morph_close};
pub use otsu::{histogram_bin, otsu_threshold, BINS as OTSU_BINS};

use crate::scene::{ClassId, LabelMap, BACKGROUND};
use crate::splat::ObjectnessMask;
use crate::{Error, Grid, Result};

/// Dense per-pixel class labels for one view; `0` is background.
pub type SegmentProposal = LabelMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineParams {
    pub close_radius: usize,
    /// Foreground unary inside the closed mask; `1 - unary_confidence` outside.
    pub unary_confidence: f64,
    pub crf: CrfParams,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams { close_radius: 5, unary_confidence: 0.9, crf: CrfParams::default() }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.unary_confidence > 0.5 && self.unary_confidence <= 1.0) {
            return Err(Error::Config(format!("unary_confidence must be in (0.5, 1], got {}", self.unary_confidence)));
        }
        self.crf.validate()
    }
}

/// One class's dense result on one view.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseClass {
    pub class_id: ClassId,
    pub foreground: Grid<bool>,
    /// CRF foreground marginal, used to arbitrate between classes.
    pub prob: Grid<f64>,
}

/// Otsu binarization of the splatted pixels. Unsplatted pixels are never set.
pub fn binarize(mask: &ObjectnessMask) -> Grid<bool> {
    let Some(t) = otsu_threshold(&mask.splatted_values()) else {
        return Grid::filled(mask.values.width(), mask.values.height(), false);
    };
    let (w, h) = mask.values.dims();
    Grid::from_fn(w, h, |x, y| mask.splatted[(x, y)] && mask.values[(x, y)] > t)
}

/// Otsu → close → CRF → argmax. A mask with no splats densifies to all
/// background.
pub fn densify_class(mask: &ObjectnessMask, rgb: Option<&RgbImage>, params: &RefineParams) -> Result<DenseClass> {
    params.validate()?;
    let (w, h) = mask.values.dims();
    if mask.splat_count() == 0 {
        return Ok(DenseClass {
            class_id: mask.class_id,
            foreground: Grid::filled(w, h, false),
            prob: Grid::filled(w, h, 0.0),
        });
    }
    let closed = morph_close(&binarize(mask), params.close_radius);
    let c = params.unary_confidence;
    let unary: Vec<f64> = closed.iter().flat_map(|&fg| if fg { [1.0 - c, c] } else { [c, 1.0 - c] }).collect();
    let q = crf_refine(&unary, w, h, 2, rgb, &params.crf)?;
    let prob: Vec<f64> = q.chunks_exact(2).map(|p| p[1]).collect();
    let foreground = q.chunks_exact(2).map(|p| p[1] > p[0]).collect();
    Ok(DenseClass {
        class_id: mask.class_id,
        foreground: Grid::from_vec(w, h, foreground),
        prob: Grid::from_vec(w, h, prob),
    })
}

/// Merges per-class results: a pixel claimed by several classes goes to the
/// highest foreground probability, ties to the lowest class id; unclaimed
/// pixels are background.
pub fn fuse_classes(width: usize, height: usize, classes: &[DenseClass]) -> Result<SegmentProposal> {
    for c in classes {
        if c.foreground.dims() != (width, height) || c.prob.dims() != (width, height) {
            return Err(Error::DimensionMismatch {
                context: format!("class {} result", c.class_id),
                expected_width: width,
                expected_height: height,
                width: c.foreground.width(),
                height: c.foreground.height(),
            });
        }
    }
    let mut labels = Grid::filled(width, height, BACKGROUND);
    let mut best = Grid::filled(width, height, f64::NEG_INFINITY);
    for i in 0..width * height {
        let (x, y) = (i % width, i / width);
        for c in classes {
            if !c.foreground[(x, y)] {
                continue;
            }
            let p = c.prob[(x, y)];
            let current = labels[(x, y)];
            if p > best[(x, y)] || (p == best[(x, y)] && c.class_id < current) {
                best[(x, y)] = p;
                labels[(x, y)] = c.class_id;
            }
        }
    }
    Ok(labels)
}
