//! Built-in scenes and the seeded scene family used for evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CameraSpec, ObjectSpec, Primitive, Room, SceneSpec};
use crate::{Error, Result};

pub(crate) const ROOM_COLORS: [[u8; 3]; 6] =
    [[180, 170, 150], [150, 175, 190], [195, 180, 205], [165, 195, 160], [110, 95, 80], [235, 232, 225]];

const ALBEDOS: [[u8; 3]; 6] =
    [[200, 40, 40], [40, 150, 60], [40, 70, 200], [230, 180, 30], [150, 60, 170], [20, 170, 180]];

const WIDTH: usize = 96;
const HEIGHT: usize = 72;
const FOCAL: f64 = 72.0;

pub const BUILTIN_NAMES: [&str; 3] = ["two-camera", "occluder", "l-shape"];

const RANDOM_SCENES: usize = 5;

fn room() -> Room {
    Room { min: [-3.0, -3.0, 0.0], max: [3.0, 3.0, 2.8], colors: ROOM_COLORS }
}

fn camera(id: &str, position: [f64; 3], look_at: [f64; 3], labeled: bool) -> CameraSpec {
    CameraSpec { id: id.into(), position, look_at, f: FOCAL, width: WIDTH, height: HEIGHT, labeled }
}

fn cube(class_id: u8, base: [f64; 2], size: f64, albedo: [u8; 3]) -> ObjectSpec {
    ObjectSpec { class_id, parts: vec![Primitive::cuboid([base[0], base[1], size / 2.0], [size; 3])], albedo }
}

fn ball(class_id: u8, base: [f64; 2], radius: f64, albedo: [u8; 3]) -> ObjectSpec {
    ObjectSpec { class_id, parts: vec![Primitive::Sphere { center: [base[0], base[1], radius], radius }], albedo }
}

/// Two boxes forming an L; `flip` mirrors the short arm in x and y.
fn l_shape(class_id: u8, base: [f64; 2], flip: [bool; 2], albedo: [u8; 3]) -> ObjectSpec {
    let sx = if flip[0] { -1.0 } else { 1.0 };
    let sy = if flip[1] { -1.0 } else { 1.0 };
    ObjectSpec {
        class_id,
        parts: vec![
            Primitive::cuboid([base[0], base[1], 0.3], [1.4, 0.45, 0.6]),
            Primitive::cuboid([base[0] + sx * 0.475, base[1] + sy * 0.5, 0.3], [0.45, 0.55, 0.6]),
        ],
        albedo,
    }
}

/// Seat, back and four legs; the back sits on the `back_dir` side (+1 or -1 in y).
fn chair(class_id: u8, base: [f64; 2], back_dir: f64, albedo: [u8; 3]) -> ObjectSpec {
    let [x, y] = base;
    let mut parts = vec![
        Primitive::cuboid([x, y, 0.45], [0.46, 0.46, 0.06]),
        Primitive::cuboid([x, y + back_dir * 0.205, 0.78], [0.46, 0.05, 0.6]),
    ];
    for (dx, dy) in [(-0.2, -0.2), (0.2, -0.2), (-0.2, 0.2), (0.2, 0.2)] {
        parts.push(Primitive::cuboid([x + dx, y + dy, 0.21], [0.05, 0.05, 0.42]));
    }
    ObjectSpec { class_id, parts, albedo }
}

fn table(class_id: u8, base: [f64; 2], albedo: [u8; 3]) -> ObjectSpec {
    let [x, y] = base;
    let mut parts = vec![Primitive::cuboid([x, y, 0.75], [1.4, 0.9, 0.08])];
    for (dx, dy) in [(-0.63, -0.38), (0.63, -0.38), (-0.63, 0.38), (0.63, 0.38)] {
        parts.push(Primitive::cuboid([x + dx, y + dy, 0.355], [0.07, 0.07, 0.71]));
    }
    ObjectSpec { class_id, parts, albedo }
}

fn two_camera() -> SceneSpec {
    SceneSpec {
        name: "two-camera".into(),
        room: room(),
        classes: vec!["cube".into()],
        objects: vec![cube(1, [0.0, 0.0], 0.8, ALBEDOS[0])],
        cameras: vec![
            camera("a", [-1.4, -2.2, 1.6], [0.0, 0.0, 0.4], true),
            camera("b", [-2.2, -1.3, 1.4], [0.0, 0.0, 0.4], false),
        ],
        depth_scale: 0.001,
    }
}

/// A chair tucked behind and partly under a table, seen over the table top.
fn occluder() -> SceneSpec {
    let target = [0.0, 0.2, 0.6];
    SceneSpec {
        name: "occluder".into(),
        room: room(),
        classes: vec!["chair".into(), "table".into()],
        objects: vec![chair(1, [0.15, 0.5], 1.0, ALBEDOS[2]), table(2, [0.0, 0.0], ALBEDOS[3])],
        cameras: vec![
            camera("front", [0.4, -2.3, 1.5], target, true),
            camera("left", [-1.7, -1.9, 1.3], target, true),
            camera("back", [0.6, 2.4, 1.4], target, true),
            camera("right", [1.9, -1.5, 1.2], target, false),
        ],
        depth_scale: 0.001,
    }
}

fn l_scene() -> SceneSpec {
    let target = [-0.2, 0.3, 0.3];
    SceneSpec {
        name: "l-shape".into(),
        room: room(),
        classes: vec!["sofa".into(), "ball".into()],
        objects: vec![l_shape(1, [0.0, 0.0], [false, false], ALBEDOS[1]), ball(2, [-1.3, 0.9], 0.3, ALBEDOS[0])],
        cameras: vec![
            camera("s0", [1.6, -2.0, 1.6], target, true),
            camera("s1", [-2.2, -1.4, 1.2], target, true),
            camera("s2", [-0.8, 2.5, 1.8], target, true),
            camera("s3", [2.4, 1.6, 1.0], target, false),
        ],
        depth_scale: 0.001,
    }
}

fn footprint(obj: &ObjectSpec) -> ([f64; 3], [f64; 3]) {
    obj.bounds()
}

fn overlaps(a: &ObjectSpec, b: &ObjectSpec, margin: f64) -> bool {
    let ((alo, ahi), (blo, bhi)) = (footprint(a), footprint(b));
    (0..2).all(|i| alo[i] - margin < bhi[i] && blo[i] - margin < ahi[i])
}

fn random_scene(rng: &mut ChaCha8Rng, index: usize) -> SceneSpec {
    let room = room();
    let n_objects = rng.gen_range(1..=3usize);
    let mut objects: Vec<ObjectSpec> = Vec::new();
    let mut albedos: Vec<[u8; 3]> = ALBEDOS.to_vec();
    while objects.len() < n_objects {
        let albedo = albedos.remove(rng.gen_range(0..albedos.len()));
        let mut placed = None;
        for _ in 0..200 {
            let base = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
            let candidate = match rng.gen_range(0..4) {
                0 => cube(1, base, rng.gen_range(0.5..0.9), albedo),
                1 => ball(2, base, rng.gen_range(0.25..0.45), albedo),
                2 => l_shape(3, base, [rng.gen(), rng.gen()], albedo),
                _ => chair(4, base, if rng.gen() { 1.0 } else { -1.0 }, albedo),
            };
            if !objects.iter().any(|o| overlaps(o, &candidate, 0.3)) {
                placed = Some(candidate);
                break;
            }
        }
        match placed {
            Some(o) => objects.push(o),
            None => break,
        }
    }

    let n_cameras = rng.gen_range(2..=8usize);
    let n_labeled =
        if n_cameras <= 2 { n_cameras } else { n_cameras.div_ceil(2).max(objects.len().min(n_cameras - 1)) };
    // Cameras circle the object group so every object shows up in several views.
    let centers: Vec<[f64; 3]> = objects.iter().map(ObjectSpec::center).collect();
    let target = [0, 1, 2].map(|a| centers.iter().map(|c| c[a]).sum::<f64>() / centers.len() as f64);
    let mut cameras = Vec::with_capacity(n_cameras);
    while cameras.len() < n_cameras {
        let i = cameras.len();
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let radius = rng.gen_range(1.8..2.6);
        let position = [
            (target[0] + radius * angle.cos()).clamp(room.min[0] + 0.2, room.max[0] - 0.2),
            (target[1] + radius * angle.sin()).clamp(room.min[1] + 0.2, room.max[1] - 0.2),
            rng.gen_range(0.9..2.0),
        ];
        let look_at = [0, 1, 2].map(|a| target[a] + rng.gen_range(-0.1..0.1));
        let p = nalgebra::Vector3::from(position);
        if objects.iter().flat_map(|o| &o.parts).any(|part| part.surface_distance(&p) < 0.5 || part.contains(&p)) {
            continue;
        }
        cameras.push(camera(&format!("c{i}"), position, look_at, i < n_labeled));
    }

    SceneSpec {
        name: format!("random-{index}"),
        room,
        classes: vec!["cube".into(), "ball".into(), "sofa".into(), "chair".into()],
        objects,
        cameras,
        depth_scale: 0.001,
    }
}

/// The three built-in scenes followed by seeded random scenes with 1-3
/// objects and 2-8 cameras. Deterministic in `seed`.
pub fn scene_suite(seed: u64) -> Vec<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut specs = vec![two_camera(), occluder(), l_scene()];
    specs.extend((0..RANDOM_SCENES).map(|i| random_scene(&mut rng, i)));
    specs
}

/// A built-in scene by name (`two-camera`, `occluder`, `l-shape`) or a suite
/// member as `suite:<index>` drawn with `seed`.
pub fn builtin_spec(name: &str, seed: u64) -> Result<SceneSpec> {
    match name {
        "two-camera" => Ok(two_camera()),
        "occluder" => Ok(occluder()),
        "l-shape" => Ok(l_scene()),
        _ => {
            let index = name
                .strip_prefix("suite:")
                .and_then(|i| i.parse::<usize>().ok())
                .ok_or_else(|| Error::Config(format!("unknown built-in scene {name}")))?;
            scene_suite(seed).into_iter().nth(index).ok_or_else(|| Error::Config(format!("suite has no scene {index}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_specs() {
        assert_eq!(scene_suite(7), scene_suite(7));
        assert_ne!(scene_suite(7), scene_suite(8));
    }

    #[test]
    fn suite_has_required_configurations() {
        for seed in [0, 1, 7, 42] {
            let suite = scene_suite(seed);
            assert!(suite.iter().any(|s| s.name == "occluder"));
            assert!(suite.iter().any(|s| s.cameras.iter().any(|c| !c.labeled)));
            for spec in &suite {
                spec.validate().unwrap();
                assert!((1..=3).contains(&spec.objects.len()), "{}", spec.name);
                assert!((2..=8).contains(&spec.cameras.len()), "{}", spec.name);
                assert!(spec.cameras.iter().any(|c| c.labeled));
            }
        }
    }

    #[test]
    fn occluder_hides_part_of_the_chair() {
        let r = super::super::render(&occluder()).unwrap();
        let spec = occluder();
        // Chair pixels visible from the front camera are fewer than with the table removed.
        let mut bare = spec.clone();
        bare.objects.truncate(1);
        let without = super::super::render(&bare).unwrap();
        let count = |g: &crate::LabelMap| g.iter().filter(|&&c| c == 1).count();
        assert!(count(&r.gt["front"]) + 20 < count(&without.gt["front"]));
    }

    #[test]
    fn builtin_lookup() {
        assert_eq!(builtin_spec("occluder", 0).unwrap().name, "occluder");
        assert_eq!(builtin_spec("suite:3", 5).unwrap(), scene_suite(5)[3]);
        assert!(builtin_spec("nope", 0).is_err());
        assert!(builtin_spec("suite:99", 0).is_err());
    }
}
