//! Pinhole projection between pixels with depth and world points.
//!
//! Pixel `(u, v)` addresses the pixel center, so integer pixel `(x, y)` is the
//! continuous coordinate `(x as f64, y as f64)`. Depth is camera-frame z.

use nalgebra::{Point3, Vector3};

use crate::scene::CameraView;
use crate::{Error, Result};

pub type WorldPoint = Point3<f64>;

/// A world point seen from a camera: continuous pixel position plus its
/// camera-frame depth. `z_cam` is always positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSample {
    pub u: f64,
    pub v: f64,
    pub z_cam: f64,
}

impl PixelSample {
    /// Nearest integer pixel, or `None` if it falls outside a `width x height` image.
    pub fn pixel(&self, width: usize, height: usize) -> Option<(usize, usize)> {
        round_to_pixel(self.u, self.v, width, height)
    }
}

/// Rounds half away from zero, then bounds-checks.
pub fn round_to_pixel(u: f64, v: f64, width: usize, height: usize) -> Option<(usize, usize)> {
    let (x, y) = (u.round(), v.round());
    if x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64 {
        Some((x as usize, y as usize))
    } else {
        None
    }
}

/// Lifts pixel `(u, v)` at camera depth `d` into world coordinates:
/// `Rᵀ · (K⁻¹ (u, v, 1)ᵀ · d) + C`.
pub fn unproject_pixel(view: &CameraView, u: f64, v: f64, d: f64) -> Result<WorldPoint> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidDepth(d));
    }
    let k = &view.intrinsics;
    let cam = Vector3::new((u - k.px) / k.f * d, (v - k.py) / k.f * d, d);
    Ok(Point3::from(view.pose.rotation.transpose() * cam + view.pose.center))
}

/// Projects a world point into the view. `None` when the point is at or
/// behind the camera plane.
pub fn project_point(view: &CameraView, p: &WorldPoint) -> Option<PixelSample> {
    let q = view.pose.rotation * (p.coords - view.pose.center);
    if q.z <= 0.0 {
        return None;
    }
    let k = &view.intrinsics;
    Some(PixelSample { u: k.f * q.x / q.z + k.px, v: k.f * q.y / q.z + k.py, z_cam: q.z })
}

/// Nearest-neighbour depth lookup; `None` when out of bounds or invalid.
pub fn depth_at(view: &CameraView, u: f64, v: f64) -> Option<f64> {
    let (x, y) = round_to_pixel(u, v, view.width(), view.height())?;
    view.depth.get(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{DepthMap, Intrinsics, Pose};
    use crate::Grid;
    use nalgebra::{Matrix3, Matrix4};
    use proptest::prelude::*;

    fn camera(f: f64, px: f64, py: f64, pose: Pose) -> CameraView {
        CameraView {
            id: "c".into(),
            intrinsics: Intrinsics { f, px, py, width: 8, height: 6 },
            pose,
            depth: DepthMap::new(Grid::filled(8, 6, 2.0)).unwrap(),
            rgb: None,
        }
    }

    /// Camera-to-world as a homogeneous 4x4: inverse of `[R | -RC; 0 1]`.
    fn homogeneous_unproject(view: &CameraView, u: f64, v: f64, d: f64) -> Point3<f64> {
        let r = view.pose.rotation;
        let t = -r * view.pose.center;
        let mut extrinsic = Matrix4::identity();
        extrinsic.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        extrinsic.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        let k = &view.intrinsics;
        let k_mat = Matrix3::new(k.f, 0.0, k.px, 0.0, k.f, k.py, 0.0, 0.0, 1.0);
        let ray = k_mat.try_inverse().unwrap() * Vector3::new(u, v, 1.0) * d;
        let world = extrinsic.try_inverse().unwrap() * ray.push(1.0);
        Point3::new(world.x / world.w, world.y / world.w, world.z / world.w)
    }

    #[test]
    fn identity_camera_on_axis() {
        let view = camera(1.0, 0.0, 0.0, Pose::identity());
        assert_eq!(unproject_pixel(&view, 0.0, 0.0, 5.0).unwrap(), Point3::new(0.0, 0.0, 5.0));
    }

    #[test]
    fn translated_camera() {
        let pose = Pose::new(Matrix3::identity(), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let view = camera(2.0, 0.0, 0.0, pose);
        assert_eq!(unproject_pixel(&view, 2.0, 0.0, 4.0).unwrap(), Point3::new(5.0, 2.0, 7.0));
    }

    #[test]
    fn rotated_camera_matches_homogeneous_oracle() {
        // 90 degrees about world y.
        let r = Matrix3::new(0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
        let view = camera(1.0, 0.0, 0.0, Pose::new(r, Vector3::zeros()).unwrap());
        let p = unproject_pixel(&view, 0.0, 0.0, 2.0).unwrap();
        let oracle = homogeneous_unproject(&view, 0.0, 0.0, 2.0);
        assert!((p - oracle).norm() < 1e-12, "{p} vs {oracle}");
        assert!((p - Point3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn behind_camera() {
        let view = camera(1.0, 0.0, 0.0, Pose::identity());
        assert!(project_point(&view, &Point3::new(0.0, 0.0, -1.0)).is_none());
        assert!(project_point(&view, &Point3::new(1.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn non_positive_depth_is_an_error() {
        let view = camera(1.0, 0.0, 0.0, Pose::identity());
        assert!(matches!(unproject_pixel(&view, 0.0, 0.0, 0.0), Err(Error::InvalidDepth(_))));
        assert!(unproject_pixel(&view, 0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn depth_lookup_rounds_half_away_from_zero() {
        let mut values = Grid::filled(8, 6, 1.0);
        values[(3, 3)] = 7.5;
        values[(5, 0)] = 0.0;
        let mut view = camera(1.0, 0.0, 0.0, Pose::identity());
        view.depth = DepthMap::new(values).unwrap();
        assert_eq!(depth_at(&view, 3.4, 2.6), Some(7.5));
        assert_eq!(depth_at(&view, 2.5, 2.5), Some(7.5));
        assert_eq!(depth_at(&view, -0.6, 0.0), None);
        assert_eq!(depth_at(&view, -0.4, 0.0), Some(1.0));
        assert_eq!(depth_at(&view, 7.5, 0.0), None);
        assert_eq!(depth_at(&view, 5.0, 0.0), None);
    }

    fn arb_view() -> impl Strategy<Value = CameraView> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            0.0f64..std::f64::consts::PI,
            prop::array::uniform3(-5.0f64..5.0),
            10.0f64..1000.0,
            -50.0f64..50.0,
            -50.0f64..50.0,
        )
            .prop_filter_map("degenerate axis", |(axis, angle, c, f, px, py)| {
                let axis = Vector3::from(axis);
                (axis.norm() > 1e-3).then(|| {
                    let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
                    camera(f, px, py, Pose::new(*r.matrix(), Vector3::from(c)).unwrap())
                })
            })
    }

    proptest! {
        #[test]
        fn round_trip(view in arb_view(), u in 0.0f64..8.0, v in 0.0f64..6.0, d in 0.05f64..50.0) {
            let p = unproject_pixel(&view, u, v, d).unwrap();
            let s = project_point(&view, &p).unwrap();
            prop_assert!((s.u - u).abs() < 1e-9 && (s.v - v).abs() < 1e-9);
            prop_assert!((s.z_cam - d).abs() < 1e-9 * d.max(1.0));
        }

        #[test]
        fn matches_homogeneous_oracle(view in arb_view(), u in 0.0f64..8.0, v in 0.0f64..6.0, d in 0.05f64..50.0) {
            let p = unproject_pixel(&view, u, v, d).unwrap();
            let o = homogeneous_unproject(&view, u, v, d);
            prop_assert!((p - o).norm() < 1e-9 * (1.0 + o.coords.norm()));
        }

        #[test]
        fn rigid_motion_invariance(
            view in arb_view(),
            p in prop::array::uniform3(-10.0f64..10.0),
            axis in prop::array::uniform3(-1.0f64..1.0),
            angle in 0.0f64..6.0,
            t in prop::array::uniform3(-5.0f64..5.0),
        ) {
            let axis = Vector3::from(axis);
            prop_assume!(axis.norm() > 1e-3);
            let g = *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix();
            let t = Vector3::from(t);
            let p = Point3::from(p);
            let moved_point = Point3::from(g * p.coords + t);
            let mut moved_view = view.clone();
            moved_view.pose = Pose {
                rotation: view.pose.rotation * g.transpose(),
                center: g * view.pose.center + t,
            };
            match (project_point(&view, &p), project_point(&moved_view, &moved_point)) {
                (Some(a), Some(b)) => {
                    let scale = 1.0 + a.u.abs().max(a.v.abs());
                    prop_assert!((a.u - b.u).abs() < 1e-9 * scale && (a.v - b.v).abs() < 1e-9 * scale);
                    prop_assert!((a.z_cam - b.z_cam).abs() < 1e-9 * (1.0 + a.z_cam));
                }
                (None, None) => {}
                (a, b) => {
                    // Only a point on the camera plane can flip sides under rounding.
                    let z = a.or(b).unwrap().z_cam;
                    prop_assert!(z < 1e-9, "visibility changed under rigid motion: {a:?} vs {b:?}");
                }
            }
        }

        #[test]
        fn projected_depth_is_positive(view in arb_view(), p in prop::array::uniform3(-10.0f64..10.0)) {
            if let Some(s) = project_point(&view, &Point3::from(p)) {
                prop_assert!(s.z_cam > 0.0);
            }
        }
    }
}
