#![allow(dead_code)]

use boxlift::synth::{CameraSpec, ObjectSpec, Primitive, Room, SceneSpec};
use boxlift::{Grid, LabelMap};

pub const ROOM_COLORS: [[u8; 3]; 6] =
    [[180, 170, 150], [150, 175, 190], [195, 180, 205], [165, 195, 160], [110, 95, 80], [235, 232, 225]];

pub fn room() -> Room {
    Room { min: [-3.0, -3.0, 0.0], max: [3.0, 3.0, 2.8], colors: ROOM_COLORS }
}

pub fn cube(class_id: u8, center: [f64; 3], size: f64, albedo: [u8; 3]) -> ObjectSpec {
    ObjectSpec { class_id, parts: vec![Primitive::cuboid(center, [size; 3])], albedo }
}

/// An L of two boxes resting on the floor.
pub fn l_block(class_id: u8, albedo: [u8; 3]) -> ObjectSpec {
    ObjectSpec {
        class_id,
        parts: vec![
            Primitive::cuboid([0.0, 0.0, 0.3], [1.4, 0.45, 0.6]),
            Primitive::cuboid([0.475, 0.5, 0.3], [0.45, 0.55, 0.6]),
        ],
        albedo,
    }
}

pub fn camera(id: &str, position: [f64; 3], look_at: [f64; 3], labeled: bool) -> CameraSpec {
    CameraSpec { id: id.into(), position, look_at, f: 72.0, width: 96, height: 72, labeled }
}

pub fn spec(name: &str, classes: &[&str], objects: Vec<ObjectSpec>, cameras: Vec<CameraSpec>) -> SceneSpec {
    SceneSpec {
        name: name.into(),
        room: room(),
        classes: classes.iter().map(|c| c.to_string()).collect(),
        objects,
        cameras,
        depth_scale: 0.001,
    }
}

/// Pixels of `class` in a label map.
pub fn class_pixels(map: &LabelMap, class: u8) -> Grid<bool> {
    map.map(|&c| c == class)
}

pub fn iou(a: &Grid<bool>, b: &Grid<bool>) -> f64 {
    let inter = a.iter().zip(b.iter()).filter(|(&x, &y)| x && y).count();
    let union = a.iter().zip(b.iter()).filter(|(&x, &y)| x || y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Pinhole projection written out from the camera parameters, independent of
/// the library: `(u, v, z_cam)` or `None` behind the camera.
pub fn oracle_project(view: &boxlift::CameraView, p: &nalgebra::Point3<f64>) -> Option<(f64, f64, f64)> {
    let r = &view.pose.rotation;
    let c = &view.pose.center;
    let d = [p.x - c.x, p.y - c.y, p.z - c.z];
    let q: Vec<f64> = (0..3).map(|i| (0..3).map(|j| r[(i, j)] * d[j]).sum()).collect();
    if q[2] <= 0.0 {
        return None;
    }
    let k = &view.intrinsics;
    Some((k.f * q[0] / q[2] + k.px, k.f * q[1] / q[2] + k.py, q[2]))
}

pub fn oracle_pixel(view: &boxlift::CameraView, u: f64, v: f64) -> Option<(usize, usize)> {
    let (x, y) = (u.round(), v.round());
    let k = &view.intrinsics;
    (x >= 0.0 && y >= 0.0 && x < k.width as f64 && y < k.height as f64).then_some((x as usize, y as usize))
}

/// Doubly nested count of same-class regions recapturing each point, with the
/// depth test when `eps` is given.
pub fn oracle_scores(
    scene: &boxlift::Scene,
    labels: &[boxlift::RegionLabel],
    points: &[nalgebra::Point3<f64>],
    class: u8,
    eps: Option<f64>,
) -> Vec<u32> {
    points
        .iter()
        .map(|p| {
            let mut score = 0;
            for label in labels.iter().filter(|l| l.class_id == class) {
                let view = scene.view(&label.view_id).unwrap();
                let Some((u, v, z)) = oracle_project(view, p) else { continue };
                let Some((x, y)) = oracle_pixel(view, u, v) else { continue };
                if !label.region.contains(x, y) {
                    continue;
                }
                if let Some(eps) = eps {
                    match view.depth.get(x, y) {
                        Some(d) if z <= d + eps => {}
                        _ => continue,
                    }
                }
                score += 1;
            }
            score
        })
        .collect()
}

/// Between-class variance (in bin units, times N²) of thresholding at `k/256`.
pub fn otsu_variance(values: &[f64], k: usize) -> f64 {
    let bin = |v: f64| ((v * 256.0).ceil() as i64 - 1).clamp(0, 255) as f64;
    let t = k as f64 / 256.0;
    let (mut n0, mut s0, mut n1, mut s1) = (0.0, 0.0, 0.0, 0.0);
    for &v in values {
        if v > t {
            n1 += 1.0;
            s1 += bin(v);
        } else {
            n0 += 1.0;
            s0 += bin(v);
        }
    }
    if n0 == 0.0 || n1 == 0.0 {
        return 0.0;
    }
    let (m0, m1) = (s0 / n0, s1 / n1);
    n0 * n1 * (m0 - m1) * (m0 - m1)
}

/// Exhaustive Otsu over the 256 candidate thresholds, ties to the lowest.
pub fn oracle_otsu(values: &[f64]) -> f64 {
    let mut best: Option<(f64, usize)> = None;
    for k in 0..256 {
        let var = otsu_variance(values, k);
        if var > 0.0 && best.is_none_or(|(b, _)| var > b) {
            best = Some((var, k));
        }
    }
    match best {
        Some((_, k)) => k as f64 / 256.0,
        None => values.iter().copied().fold(f64::INFINITY, f64::min) - 1e-9,
    }
}
