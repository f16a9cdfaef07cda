//! On-disk scene directory layout.
//!
//! ```text
//! meta.json                 {classes: [{id, name}], depth_scale, views: [ids]}
//! views/<id>/camera.json    {R: [9, row-major], C: [3], f, px, py, width, height}
//! views/<id>/depth.png      16-bit gray, meters = raw * depth_scale, 0 = invalid
//! views/<id>/rgb.png        8-bit RGB (optional)
//! labels/boxes.json         [{view, class, x0, y0, x1, y1}]
//! labels/masks/<id>.png     8-bit label indices (optional)
//! gt/<id>.png               8-bit ground truth label indices (optional)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{
    CameraView, ClassId, DepthMap, Intrinsics, LabelMap, Pose, Region, RegionLabel, Scene, DEFAULT_DEPTH_SCALE,
};
use crate::{Error, Grid, Result};

#[derive(Serialize, Deserialize)]
struct MetaFile {
    classes: Vec<ClassEntry>,
    #[serde(default = "default_depth_scale")]
    depth_scale: f64,
    views: Vec<String>,
}

fn default_depth_scale() -> f64 {
    DEFAULT_DEPTH_SCALE
}

#[derive(Serialize, Deserialize)]
struct ClassEntry {
    id: ClassId,
    name: String,
}

#[derive(Serialize, Deserialize)]
struct CameraFile {
    #[serde(rename = "R")]
    rotation: [f64; 9],
    #[serde(rename = "C")]
    center: [f64; 3],
    f: f64,
    px: f64,
    py: f64,
    width: usize,
    height: usize,
}

#[derive(Serialize, Deserialize)]
struct BoxEntry {
    view: String,
    class: ClassId,
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::malformed(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    let reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader.with_guessed_format().map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| Error::malformed(path, e))
}

fn save_image<P, C>(path: &Path, img: &ImageBuffer<P, C>) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::malformed(path, other),
    })
}

fn read_label_png(path: &Path) -> Result<LabelMap> {
    match open_image(path)? {
        image::DynamicImage::ImageLuma8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            Ok(Grid::from_vec(w, h, img.into_raw()))
        }
        other => Err(Error::malformed(path, format!("expected 8-bit grayscale label image, got {:?}", other.color()))),
    }
}

fn write_label_png(path: &Path, labels: &LabelMap) -> Result<()> {
    let img: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(labels.width() as u32, labels.height() as u32, labels.as_slice().to_vec())
            .expect("label buffer matches dimensions");
    save_image(path, &img)
}

/// Writes a 16-bit grayscale PNG.
pub fn write_u16_png(path: &Path, width: usize, height: usize, values: Vec<u16>) -> Result<()> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, values).expect("buffer matches dimensions");
    save_image(path, &img)
}

pub fn load_scene(dir: &Path) -> Result<Scene> {
    let meta: MetaFile = read_json(&dir.join("meta.json"))?;
    let classes: BTreeMap<ClassId, String> = meta.classes.into_iter().map(|c| (c.id, c.name)).collect();

    let mut views = Vec::with_capacity(meta.views.len());
    for id in &meta.views {
        views.push(load_view(dir, id, meta.depth_scale)?);
    }

    let mut labels = Vec::new();
    let boxes_path = dir.join("labels").join("boxes.json");
    if boxes_path.exists() {
        let boxes: Vec<BoxEntry> = read_json(&boxes_path)?;
        labels.extend(boxes.into_iter().map(|b| RegionLabel::new_box(b.view, b.class, b.x0, b.y0, b.x1, b.y1)));
    }
    let masks_dir = dir.join("labels").join("masks");
    if masks_dir.is_dir() {
        for (view_id, map) in load_label_maps(&masks_dir)? {
            labels.extend(label_map_to_regions(&view_id, &map));
        }
    }

    Scene::new(views, labels, classes, meta.depth_scale)
}

/// One mask label per class present in `map`, in ascending class order.
pub fn label_map_to_regions(view_id: &str, map: &LabelMap) -> Vec<RegionLabel> {
    let mut present = [false; 256];
    for &c in map.iter() {
        present[c as usize] = true;
    }
    (1..=255u8)
        .filter(|&c| present[c as usize])
        .map(|c| RegionLabel { view_id: view_id.to_string(), class_id: c, region: Region::Mask(map.map(|&v| v == c)) })
        .collect()
}

fn load_view(dir: &Path, id: &str, depth_scale: f64) -> Result<CameraView> {
    let view_dir = dir.join("views").join(id);
    let cam: CameraFile = read_json(&view_dir.join("camera.json"))?;
    let intrinsics = Intrinsics { f: cam.f, px: cam.px, py: cam.py, width: cam.width, height: cam.height };
    let pose = Pose { rotation: Matrix3::from_row_slice(&cam.rotation), center: Vector3::from_row_slice(&cam.center) };

    let depth_path = view_dir.join("depth.png");
    let depth = match open_image(&depth_path)? {
        image::DynamicImage::ImageLuma16(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            DepthMap::from_raw(w, h, img.as_raw(), depth_scale)?
        }
        other => {
            return Err(Error::malformed(
                &depth_path,
                format!("expected 16-bit grayscale depth, got {:?}", other.color()),
            ))
        }
    };

    let rgb_path = view_dir.join("rgb.png");
    let rgb = if rgb_path.exists() { Some(open_image(&rgb_path)?.to_rgb8()) } else { None };

    let view = CameraView { id: id.to_string(), intrinsics, pose, depth, rgb };
    view.validate()?;
    Ok(view)
}

/// Writes a scene in the directory layout above. Mask labels of one view are
/// merged into a single label image and must not overlap.
pub fn save_scene(scene: &Scene, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let meta = MetaFile {
        classes: scene.classes.iter().map(|(&id, name)| ClassEntry { id, name: name.clone() }).collect(),
        depth_scale: scene.depth_scale,
        views: scene.views.iter().map(|v| v.id.clone()).collect(),
    };
    write_json(&dir.join("meta.json"), &meta)?;

    for view in &scene.views {
        let view_dir = dir.join("views").join(&view.id);
        create_dir(&view_dir)?;
        let r = view.pose.rotation;
        let cam = CameraFile {
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            center: [view.pose.center.x, view.pose.center.y, view.pose.center.z],
            f: view.intrinsics.f,
            px: view.intrinsics.px,
            py: view.intrinsics.py,
            width: view.intrinsics.width,
            height: view.intrinsics.height,
        };
        write_json(&view_dir.join("camera.json"), &cam)?;
        write_u16_png(&view_dir.join("depth.png"), view.width(), view.height(), view.depth.to_raw(scene.depth_scale))?;
        if let Some(rgb) = &view.rgb {
            save_image(&view_dir.join("rgb.png"), rgb)?;
        }
    }

    let labels_dir = dir.join("labels");
    create_dir(&labels_dir)?;
    let boxes: Vec<BoxEntry> = scene
        .labels
        .iter()
        .filter_map(|l| match l.region {
            Region::Box { x0, y0, x1, y1 } => {
                Some(BoxEntry { view: l.view_id.clone(), class: l.class_id, x0, y0, x1, y1 })
            }
            Region::Mask(_) => None,
        })
        .collect();
    write_json(&labels_dir.join("boxes.json"), &boxes)?;

    let mut masks: BTreeMap<&str, LabelMap> = BTreeMap::new();
    for label in &scene.labels {
        let Region::Mask(mask) = &label.region else { continue };
        let merged = masks.entry(&label.view_id).or_insert_with(|| Grid::filled(mask.width(), mask.height(), 0));
        for (dst, &set) in merged.as_mut_slice().iter_mut().zip(mask.iter()) {
            if set {
                if *dst != 0 && *dst != label.class_id {
                    return Err(Error::Validation(format!(
                        "mask labels of classes {} and {} overlap on view {}",
                        dst, label.class_id, label.view_id
                    )));
                }
                *dst = label.class_id;
            }
        }
    }
    if !masks.is_empty() {
        let masks_dir = labels_dir.join("masks");
        create_dir(&masks_dir)?;
        for (id, map) in &masks {
            write_label_png(&masks_dir.join(format!("{id}.png")), map)?;
        }
    }
    Ok(())
}

/// Writes one `<view_id>.png` label image per entry.
pub fn save_label_maps<'a, I>(dir: &Path, maps: I) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a LabelMap)>,
{
    create_dir(dir)?;
    for (id, map) in maps {
        write_label_png(&dir.join(format!("{id}.png")), map)?;
    }
    Ok(())
}

/// Reads every `<view_id>.png` label image in `dir`.
pub fn load_label_maps(dir: &Path) -> Result<BTreeMap<String, LabelMap>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|ext| ext == "png") {
            paths.push(path);
        }
    }
    paths.sort();
    let mut out = BTreeMap::new();
    for path in paths {
        let id =
            path.file_stem().and_then(|s| s.to_str()).ok_or_else(|| Error::malformed(&path, "non-UTF-8 file name"))?;
        out.insert(id.to_string(), read_label_png(&path)?);
    }
    Ok(out)
}

/// Writes proposals as 8-bit label images, one per view, after checking each
/// against its view's dimensions.
pub fn save_proposals(scene: &Scene, proposals: &BTreeMap<String, LabelMap>, dir: &Path) -> Result<()> {
    for (id, map) in proposals {
        let view = scene.view(id).ok_or_else(|| Error::Validation(format!("proposal for unknown view {id}")))?;
        if map.dims() != (view.width(), view.height()) {
            return Err(Error::DimensionMismatch {
                context: format!("proposal for view {id}"),
                expected_width: view.width(),
                expected_height: view.height(),
                width: map.width(),
                height: map.height(),
            });
        }
    }
    save_label_maps(dir, proposals.iter().map(|(id, m)| (id.as_str(), m)))
}

/// Lossless little-endian `f64` depth, stored next to the quantized PNG.
pub fn write_depth_sidecar(path: &Path, depth: &DepthMap) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + depth.values().len() * 8);
    bytes.extend_from_slice(&(depth.width() as u64).to_le_bytes());
    bytes.extend_from_slice(&(depth.height() as u64).to_le_bytes());
    for v in depth.values().iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_depth_sidecar(path: &Path) -> Result<DepthMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let word = |i: usize| -> Option<[u8; 8]> { bytes.get(i * 8..i * 8 + 8).map(|b| b.try_into().unwrap()) };
    let header = word(0).zip(word(1)).ok_or_else(|| Error::malformed(path, "truncated header"))?;
    let (w, h) = (u64::from_le_bytes(header.0) as usize, u64::from_le_bytes(header.1) as usize);
    if bytes.len() != 16 + w * h * 8 {
        return Err(Error::malformed(path, "length does not match header"));
    }
    let values = (0..w * h).map(|i| f64::from_le_bytes(word(i + 2).unwrap())).collect();
    DepthMap::new(Grid::from_vec(w, h, values))
}
