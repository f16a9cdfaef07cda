//! Analytic RGB-D scene renderer with exact ground truth.
//!
//! Every pixel ray is intersected with the room box and the object
//! primitives in closed form. Ray directions are built with unit camera-frame
//! z, so the ray parameter of the nearest hit is its camera z-depth.

mod raycast;
mod suite;

use std::collections::BTreeMap;
use std::path::Path;

use image::{Rgb, RgbImage};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scene::{
    save_label_maps, save_scene, write_depth_sidecar, CameraView, ClassId, DepthMap, Intrinsics, LabelMap, Pose,
    RegionLabel, Scene, BACKGROUND, DEFAULT_DEPTH_SCALE,
};
use crate::{Error, Grid, Result};

pub use raycast::intersect;
pub use suite::{builtin_spec, scene_suite, BUILTIN_NAMES};

const WORLD_UP: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

/// Direction towards the light used to shade objects, and the ambient share.
const LIGHT: [f64; 3] = [0.36, -0.48, 0.8];
const AMBIENT: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    Cuboid { min: [f64; 3], max: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
}

impl Primitive {
    pub fn cuboid(center: [f64; 3], size: [f64; 3]) -> Self {
        Primitive::Cuboid {
            min: [0, 1, 2].map(|a| center[a] - size[a] / 2.0),
            max: [0, 1, 2].map(|a| center[a] + size[a] / 2.0),
        }
    }

    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match *self {
            Primitive::Cuboid { min, max } => (min, max),
            Primitive::Sphere { center, radius } => (center.map(|c| c - radius), center.map(|c| c + radius)),
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        match *self {
            Primitive::Cuboid { min, max } => (0..3).all(|a| p[a] >= min[a] && p[a] <= max[a]),
            Primitive::Sphere { center, radius } => (p - Vector3::from(center)).norm() <= radius,
        }
    }

    /// Distance from `p` to the primitive's surface.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        match *self {
            Primitive::Cuboid { min, max } => {
                let outside = Vector3::from_fn(|a, _| (min[a] - p[a]).max(p[a] - max[a]).max(0.0));
                if outside.norm() > 0.0 {
                    outside.norm()
                } else {
                    (0..3).map(|a| (p[a] - min[a]).min(max[a] - p[a])).fold(f64::INFINITY, f64::min)
                }
            }
            Primitive::Sphere { center, radius } => ((p - Vector3::from(center)).norm() - radius).abs(),
        }
    }

    /// Outward unit normal at a surface point. On a cuboid this is the normal
    /// of the face whose plane is nearest to `p`.
    pub fn normal(&self, p: &Vector3<f64>) -> Vector3<f64> {
        match *self {
            Primitive::Cuboid { min, max } => {
                let mut best = (f64::INFINITY, Vector3::zeros());
                for a in 0..3 {
                    for (bound, sign) in [(min[a], -1.0), (max[a], 1.0)] {
                        let d = (p[a] - bound).abs();
                        if d < best.0 {
                            let mut n = Vector3::zeros();
                            n[a] = sign;
                            best = (d, n);
                        }
                    }
                }
                best.1
            }
            Primitive::Sphere { center, .. } => (p - Vector3::from(center)).normalize(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub class_id: ClassId,
    /// Union of primitives; more than one part makes a non-convex object.
    pub parts: Vec<Primitive>,
    pub albedo: [u8; 3],
}

impl ObjectSpec {
    pub fn is_compound(&self) -> bool {
        self.parts.len() > 1
    }

    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        self.parts
            .iter()
            .map(Primitive::bounds)
            .fold(([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]), |(lo, hi), (a, b)| {
                ([0, 1, 2].map(|i| lo[i].min(a[i])), [0, 1, 2].map(|i| hi[i].max(b[i])))
            })
    }

    pub fn center(&self) -> [f64; 3] {
        let (lo, hi) = self.bounds();
        [0, 1, 2].map(|i| (lo[i] + hi[i]) / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub id: String,
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub f: f64,
    pub width: usize,
    pub height: usize,
    /// Whether the camera's ground-truth boxes become input labels.
    pub labeled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub min: [f64; 3],
    pub max: [f64; 3],
    /// Face colors in order x-min, x-max, y-min, y-max, floor, ceiling.
    pub colors: [[u8; 3]; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub name: String,
    pub room: Room,
    /// Class names; class id `i + 1` is `classes[i]`.
    pub classes: Vec<String>,
    pub objects: Vec<ObjectSpec>,
    pub cameras: Vec<CameraSpec>,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
}

fn default_depth_scale() -> f64 {
    DEFAULT_DEPTH_SCALE
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(format!("scene spec {}: {m}", self.name)));
        if self.cameras.is_empty() {
            return fail("at least one camera is required".into());
        }
        let inside_room =
            |lo: &[f64; 3], hi: &[f64; 3]| (0..3).all(|a| lo[a] >= self.room.min[a] && hi[a] <= self.room.max[a]);
        for (i, obj) in self.objects.iter().enumerate() {
            if obj.class_id == BACKGROUND || obj.class_id as usize > self.classes.len() {
                return fail(format!("object {i} has unknown class {}", obj.class_id));
            }
            if obj.parts.is_empty() {
                return fail(format!("object {i} has no parts"));
            }
            for part in &obj.parts {
                let (lo, hi) = part.bounds();
                if !inside_room(&lo, &hi) {
                    return fail(format!("object {i} extends outside the room"));
                }
            }
        }
        for cam in &self.cameras {
            let p = Vector3::from(cam.position);
            if !(0..3).all(|a| p[a] > self.room.min[a] && p[a] < self.room.max[a]) {
                return fail(format!("camera {} is outside the room", cam.id));
            }
            if self.objects.iter().flat_map(|o| &o.parts).any(|part| part.contains(&p)) {
                return fail(format!("camera {} is inside an object", cam.id));
            }
            if !(cam.f > 0.0 && cam.width > 0 && cam.height > 0) {
                return fail(format!("camera {} has invalid intrinsics", cam.id));
            }
        }
        Ok(())
    }

    /// True when some object is compound or some labeled camera sees an
    /// object off-axis, i.e. where a filled box is a loose fit.
    pub fn has_nonconvex_or_diagonal_view(&self) -> bool {
        if self.objects.iter().any(ObjectSpec::is_compound) {
            return true;
        }
        let oblique = |dir: Vector3<f64>| {
            let d = dir.normalize();
            // More than ~20 degrees away from every axis.
            d.iter().all(|c| c.abs() < 20f64.to_radians().cos())
        };
        self.cameras
            .iter()
            .filter(|c| c.labeled)
            .any(|cam| self.objects.iter().any(|o| oblique(Vector3::from(o.center()) - Vector3::from(cam.position))))
    }

    pub fn class_table(&self) -> BTreeMap<ClassId, String> {
        self.classes.iter().enumerate().map(|(i, n)| (i as ClassId + 1, n.clone())).collect()
    }
}

/// A rendered scene with ground truth.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub spec_name: String,
    /// Views with exact float depth; labels are the ground-truth boxes of the
    /// labeled cameras.
    pub scene: Scene,
    pub gt: BTreeMap<String, LabelMap>,
    /// Per-view object index + 1 of the nearest hit, `0` for the room.
    pub instances: BTreeMap<String, Grid<u16>>,
    /// Ground-truth boxes on every camera, labeled or not.
    pub gt_boxes: Vec<RegionLabel>,
}

impl Rendered {
    pub fn labeled_views(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.scene.labels.iter().map(|l| l.view_id.clone()).collect();
        ids.dedup();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn unlabeled_views(&self) -> Vec<String> {
        let labeled = self.labeled_views();
        self.scene.views.iter().map(|v| v.id.clone()).filter(|id| !labeled.contains(id)).collect()
    }

    /// Writes the scene directory plus `gt/` and lossless `depth.f64` sidecars.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        save_scene(&self.scene, dir)?;
        save_label_maps(&dir.join("gt"), self.gt.iter().map(|(id, m)| (id.as_str(), m)))?;
        for view in &self.scene.views {
            write_depth_sidecar(&dir.join("views").join(&view.id).join("depth.f64"), &view.depth)?;
        }
        Ok(())
    }
}

struct Hit {
    depth: f64,
    object: Option<usize>,
    /// Room face index, or the part index within the hit object.
    face: usize,
}

fn cast(spec: &SceneSpec, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Hit {
    let (t_room, face) = raycast::exit_box(&spec.room.min, &spec.room.max, origin, dir);
    let mut hit = Hit { depth: t_room, object: None, face };
    for (i, obj) in spec.objects.iter().enumerate() {
        for (j, part) in obj.parts.iter().enumerate() {
            if let Some(t) = intersect(part, origin, dir) {
                if t < hit.depth {
                    hit = Hit { depth: t, object: Some(i), face: j };
                }
            }
        }
    }
    hit
}

/// Lambert shading with an ambient floor.
fn shade(albedo: [u8; 3], normal: &Vector3<f64>) -> [u8; 3] {
    let light = Vector3::from(LIGHT).normalize();
    let k = AMBIENT + (1.0 - AMBIENT) * normal.dot(&light).max(0.0);
    albedo.map(|c| (f64::from(c) * k).round().clamp(0.0, 255.0) as u8)
}

pub fn camera_view(cam: &CameraSpec) -> Result<CameraView> {
    let pose = Pose::look_at(Vector3::from(cam.position), Vector3::from(cam.look_at), WORLD_UP)
        .map_err(|e| Error::Validation(format!("camera {}: {e}", cam.id)))?;
    let intrinsics = Intrinsics {
        f: cam.f,
        px: (cam.width as f64 - 1.0) / 2.0,
        py: (cam.height as f64 - 1.0) / 2.0,
        width: cam.width,
        height: cam.height,
    };
    Ok(CameraView {
        id: cam.id.clone(),
        intrinsics,
        pose,
        depth: DepthMap::new(Grid::filled(cam.width, cam.height, 0.0))?,
        rgb: None,
    })
}

/// World-frame ray direction through pixel `(x, y)`, scaled so its camera z is 1.
pub fn pixel_ray(view: &CameraView, x: f64, y: f64) -> Vector3<f64> {
    let k = &view.intrinsics;
    view.pose.rotation.transpose() * Vector3::new((x - k.px) / k.f, (y - k.py) / k.f, 1.0)
}

pub fn render(spec: &SceneSpec) -> Result<Rendered> {
    spec.validate()?;
    let views: Vec<CameraView> = spec.cameras.iter().map(camera_view).collect::<Result<_>>()?;
    let per_view: Vec<(CameraView, LabelMap, Grid<u16>)> = views
        .into_par_iter()
        .map(|mut view| {
            let (w, h) = (view.width(), view.height());
            let origin = view.pose.center;
            let hits: Vec<Hit> =
                (0..w * h).map(|i| cast(spec, &origin, &pixel_ray(&view, (i % w) as f64, (i / w) as f64))).collect();
            let depth = Grid::from_vec(w, h, hits.iter().map(|h| h.depth).collect());
            let gt = Grid::from_vec(
                w,
                h,
                hits.iter().map(|h| h.object.map_or(BACKGROUND, |o| spec.objects[o].class_id)).collect(),
            );
            let inst = Grid::from_vec(w, h, hits.iter().map(|h| h.object.map_or(0, |o| o as u16 + 1)).collect());
            let rgb = RgbImage::from_fn(w as u32, h as u32, |x, y| {
                let hit = &hits[y as usize * w + x as usize];
                match hit.object {
                    None => Rgb(spec.room.colors[hit.face]),
                    Some(o) => {
                        let obj = &spec.objects[o];
                        let p = origin + hit.depth * pixel_ray(&view, f64::from(x), f64::from(y));
                        Rgb(shade(obj.albedo, &obj.parts[hit.face].normal(&p)))
                    }
                }
            });
            view.depth = DepthMap::new(depth).expect("ray depths are finite");
            view.rgb = Some(rgb);
            (view, gt, inst)
        })
        .collect();

    let mut gt_boxes = Vec::new();
    let mut labels = Vec::new();
    for ((view, _, inst), cam) in per_view.iter().zip(&spec.cameras) {
        for (o, obj) in spec.objects.iter().enumerate() {
            if let Some(label) = tight_box(&view.id, obj.class_id, inst, o as u16 + 1) {
                if cam.labeled {
                    labels.push(label.clone());
                }
                gt_boxes.push(label);
            }
        }
    }
    let mut views = Vec::with_capacity(per_view.len());
    let mut gt = BTreeMap::new();
    let mut instances = BTreeMap::new();
    for (view, g, inst) in per_view {
        gt.insert(view.id.clone(), g);
        instances.insert(view.id.clone(), inst);
        views.push(view);
    }
    let scene = Scene::new(views, labels, spec.class_table(), spec.depth_scale)?;
    Ok(Rendered { spec_name: spec.name.clone(), scene, gt, instances, gt_boxes })
}

fn tight_box(view_id: &str, class_id: ClassId, inst: &Grid<u16>, target: u16) -> Option<RegionLabel> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for (x, y, &v) in inst.enumerate() {
        if v == target {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
        }
    }
    (x0 != usize::MAX).then(|| RegionLabel::new_box(view_id, class_id, x0, y0, x1, y1))
}
