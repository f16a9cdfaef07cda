mod common;

use std::sync::OnceLock;

use boxlift::objectness::ScoringParams;
use boxlift::synth::{render, Rendered};
use boxlift::{
    build_class_cloud, normalize_scores, score_points, splat_all, splat_class, unproject_pixel, ClassPointCloud, Grid,
    Region, RegionLabel,
};
use common::{camera, cube, oracle_project, oracle_scores, spec};
use nalgebra::Point3;
use proptest::prelude::*;

/// A cube seen by two cameras on the same side, each with its tight box.
fn two_facing() -> Rendered {
    render(&spec(
        "two-facing",
        &["cube"],
        vec![cube(1, [0.0, 0.0, 0.4], 0.8, [200, 40, 40])],
        vec![
            camera("a", [-0.6, -2.4, 1.2], [0.0, 0.0, 0.4], true),
            camera("b", [0.6, -2.4, 1.2], [0.0, 0.0, 0.4], true),
        ],
    ))
    .unwrap()
}

fn scored(r: &Rendered, labels: &[RegionLabel], class: u8, stride: usize, params: ScoringParams) -> ClassPointCloud {
    let mut cloud = build_class_cloud(&r.scene, labels, class, stride).unwrap();
    score_points(&mut cloud, &r.scene, labels, params).unwrap();
    normalize_scores(&mut cloud);
    cloud
}

fn positions(cloud: &ClassPointCloud) -> Vec<Point3<f64>> {
    cloud.points.iter().map(|p| p.pos).collect()
}

#[test]
fn cube_face_point_scores_two_and_wall_point_one() {
    let r = two_facing();
    let labels = &r.scene.labels;
    let cloud = scored(&r, labels, 1, 1, ScoringParams::default());
    assert_eq!(
        cloud.points.iter().map(|p| p.score).collect::<Vec<_>>(),
        oracle_scores(&r.scene, labels, &positions(&cloud), 1, None)
    );

    // Center of the front face, seen by both cameras.
    let face = Point3::new(0.0, -0.4, 0.4);
    assert_eq!(oracle_scores(&r.scene, labels, &[face], 1, None), vec![2]);
    let near_face = cloud.points.iter().min_by(|a, b| (a.pos - face).norm().total_cmp(&(b.pos - face).norm())).unwrap();
    assert!((near_face.pos - face).norm() < 0.03);
    assert_eq!(near_face.score, 2);

    // Some lifted wall or floor point lies inside only one camera's box.
    let lone = cloud.points.iter().find(|p| p.pos.y > 1.0 && p.score == 1);
    assert!(lone.is_some(), "expected a background point recaptured once");
}

#[test]
fn occlusion_aware_scores_match_the_oracle() {
    let r = two_facing();
    let params = ScoringParams { occlusion_aware: true, ..Default::default() };
    let cloud = scored(&r, &r.scene.labels, 1, 1, params);
    let expected = oracle_scores(&r.scene, &r.scene.labels, &positions(&cloud), 1, Some(params.depth_eps));
    assert_eq!(cloud.points.iter().map(|p| p.score).collect::<Vec<_>>(), expected);
}

/// Second camera a quarter turn around the cube from the first.
#[test]
fn quarter_turn_cameras_match_the_oracle_on_the_near_face() {
    let r = render(&spec(
        "quarter",
        &["cube"],
        vec![cube(1, [0.0, 0.0, 0.4], 0.8, [40, 70, 200])],
        vec![camera("a", [0.0, -2.4, 1.0], [0.0, 0.0, 0.4], true), camera("b", [2.4, 0.0, 1.0], [0.0, 0.0, 0.4], true)],
    ))
    .unwrap();
    let cloud = scored(&r, &r.scene.labels, 1, 1, ScoringParams::default());
    let near: Vec<_> = cloud.points.iter().filter(|p| (p.pos.y + 0.4).abs() < 1e-6).collect();
    assert!(near.len() > 100);
    let expected = oracle_scores(&r.scene, &r.scene.labels, &near.iter().map(|p| p.pos).collect::<Vec<_>>(), 1, None);
    assert_eq!(near.iter().map(|p| p.score).collect::<Vec<_>>(), expected);
}

#[test]
fn two_cube_probabilities_match_the_oracle() {
    let r = render(&spec(
        "two-cubes",
        &["red", "blue"],
        vec![cube(1, [-0.8, 0.0, 0.35], 0.7, [200, 40, 40]), cube(2, [0.8, 0.3, 0.3], 0.6, [40, 70, 200])],
        vec![
            camera("a", [-1.0, -2.5, 1.4], [0.0, 0.0, 0.4], true),
            camera("b", [1.5, -2.2, 1.2], [0.0, 0.0, 0.4], true),
            camera("c", [0.2, 2.4, 1.6], [0.0, 0.0, 0.4], true),
        ],
    ))
    .unwrap();
    for class in [1, 2] {
        let cloud = scored(&r, &r.scene.labels, class, 1, ScoringParams::default());
        let expected = oracle_scores(&r.scene, &r.scene.labels, &positions(&cloud), class, None);
        let max = *expected.iter().max().unwrap();
        for (p, &e) in cloud.points.iter().zip(&expected) {
            assert_eq!(p.score, e);
            assert_eq!(p.prob, e as f64 / max as f64);
        }
        assert!(cloud.points.iter().any(|p| p.prob == 1.0));
    }
}

#[test]
fn lifted_face_points_lie_on_the_face_plane() {
    let r = two_facing();
    let view = r.scene.view("a").unwrap();
    let inst = &r.instances["a"];
    // Pixels of the cube that the renderer placed on its front face.
    let front = Grid::from_fn(view.width(), view.height(), |x, y| {
        inst[(x, y)] == 1 && {
            let p = unproject_pixel(view, x as f64, y as f64, view.depth.get(x, y).unwrap()).unwrap();
            (p.y + 0.4).abs() < 1e-6
        }
    });
    assert!(front.count_set() > 200);
    let label = RegionLabel { view_id: "a".into(), class_id: 1, region: Region::Mask(front) };
    let cloud = build_class_cloud(&r.scene, &[label], 1, 1).unwrap();
    for p in &cloud.points {
        assert!((p.pos.y + 0.4).abs() < 1e-6, "{:?}", p.pos);
        assert!(p.pos.x.abs() <= 0.4 + 1e-6 && (0.0..=0.8 + 1e-6).contains(&p.pos.z));
    }
}

#[test]
fn unlabeled_view_facing_the_object_receives_splats() {
    let r = render(&boxlift::synth::builtin_spec("two-camera", 0).unwrap()).unwrap();
    let cloud = scored(&r, &r.scene.labels, 1, 1, ScoringParams::default());
    let masks = splat_all(std::slice::from_ref(&cloud), &r.scene.views, 0.02);
    assert_eq!(masks.len(), r.scene.views.len());
    for id in r.unlabeled_views() {
        let mask = &masks[&(id.clone(), 1)];
        let on_object = mask.splatted.enumerate().filter(|&(x, y, &s)| s && r.gt[&id][(x, y)] == 1).count();
        assert!(on_object > 100, "{on_object} splats on the cube in view {id}");
    }
}

fn shared() -> &'static Rendered {
    static SCENE: OnceLock<Rendered> = OnceLock::new();
    SCENE.get_or_init(|| render(&boxlift::synth::builtin_spec("occluder", 0).unwrap()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scores_ignore_label_order(seed in any::<u64>(), occlusion in any::<bool>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let r = shared();
        let params = ScoringParams { occlusion_aware: occlusion, ..Default::default() };
        let mut shuffled = r.scene.labels.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let base = scored(r, &r.scene.labels, 1, 3, params);
        let mut cloud = base.clone();
        cloud.points.reverse();
        score_points(&mut cloud, &r.scene, &shuffled, params).unwrap();
        cloud.points.reverse();
        prop_assert_eq!(
            base.points.iter().map(|p| p.score).collect::<Vec<_>>(),
            cloud.points.iter().map(|p| p.score).collect::<Vec<_>>()
        );
    }

    #[test]
    fn adding_a_label_never_lowers_a_score(
        view in 0usize..4, x0 in 0usize..90, y0 in 0usize..66, w in 1usize..40, h in 1usize..30, occlusion in any::<bool>()
    ) {
        let r = shared();
        let params = ScoringParams { occlusion_aware: occlusion, ..Default::default() };
        let before = scored(r, &r.scene.labels, 1, 3, params);
        let id = r.scene.views[view].id.clone();
        let extra = RegionLabel::new_box(id, 1, x0, y0, (x0 + w).min(96), (y0 + h).min(72));
        let mut labels = r.scene.labels.clone();
        labels.push(extra);
        let mut after = before.clone();
        score_points(&mut after, &r.scene, &labels, params).unwrap();
        for (a, b) in before.points.iter().zip(&after.points) {
            prop_assert!(b.score >= a.score);
        }
    }

    #[test]
    fn splats_are_cloud_probabilities_and_ignore_point_order(view in 0usize..4, seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let r = shared();
        let cloud = scored(r, &r.scene.labels, 2, 2, ScoringParams::default());
        let v = &r.scene.views[view];
        let mask = splat_class(&cloud, v, 0.02);
        let mut shuffled = cloud.clone();
        shuffled.points.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(&splat_class(&shuffled, v, 0.02), &mask);
        for (x, y, &s) in mask.splatted.enumerate() {
            let value = mask.values[(x, y)];
            if s {
                prop_assert!(cloud.points.iter().any(|p| p.prob == value));
            } else {
                prop_assert_eq!(value, 0.0);
            }
        }
    }

    #[test]
    fn every_splat_passes_the_depth_test(view in 0usize..4) {
        let r = shared();
        let cloud = scored(r, &r.scene.labels, 1, 1, ScoringParams::default());
        let v = &r.scene.views[view];
        let (_, trace) = boxlift::splat::splat_class_traced(&cloud, v, 0.02);
        for s in trace {
            let (_, _, z) = oracle_project(v, &cloud.points[s.point].pos).unwrap();
            prop_assert!(z <= v.depth.get(s.x, s.y).unwrap() + 0.02);
        }
    }
}
