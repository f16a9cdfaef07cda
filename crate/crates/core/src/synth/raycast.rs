//! Analytic ray intersections against axis-aligned boxes and spheres.

use nalgebra::Vector3;

use super::Primitive;

/// Smallest `t > 0` where `origin + t·dir` enters the primitive. Rays that
/// start inside a primitive report no hit.
pub fn intersect(prim: &Primitive, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    match prim {
        Primitive::Cuboid { min, max } => intersect_box(min, max, origin, dir),
        Primitive::Sphere { center, radius } => intersect_sphere(&Vector3::from(*center), *radius, origin, dir),
    }
}

fn intersect_box(min: &[f64; 3], max: &[f64; 3], origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    let mut near = f64::NEG_INFINITY;
    let mut far = f64::INFINITY;
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < min[a] || origin[a] > max[a] {
                return None;
            }
            continue;
        }
        let t1 = (min[a] - origin[a]) / dir[a];
        let t2 = (max[a] - origin[a]) / dir[a];
        near = near.max(t1.min(t2));
        far = far.min(t1.max(t2));
    }
    (near <= far && near > 0.0).then_some(near)
}

fn intersect_sphere(center: &Vector3<f64>, radius: f64, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    let oc = origin - center;
    let a = dir.norm_squared();
    let half_b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    if c <= 0.0 {
        return None;
    }
    let disc = half_b * half_b - a * c;
    if disc < 0.0 {
        return None;
    }
    // c > 0 means both roots share a sign; the near root is c / q for q = -half_b + sqrt(disc).
    let q = -half_b + disc.sqrt();
    (q > 0.0).then(|| c / q)
}

/// Where a ray starting inside the box leaves it, and through which face
/// (`2·axis + 0` for the min side, `+1` for the max side).
pub fn exit_box(min: &[f64; 3], max: &[f64; 3], origin: &Vector3<f64>, dir: &Vector3<f64>) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for a in 0..3 {
        let (bound, face) = if dir[a] > 0.0 {
            (max[a], 2 * a + 1)
        } else if dir[a] < 0.0 {
            (min[a], 2 * a)
        } else {
            continue;
        };
        let t = (bound - origin[a]) / dir[a];
        if t < best.0 {
            best = (t, face);
        }
    }
    best
}
