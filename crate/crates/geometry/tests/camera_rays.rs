use geometry::rig::{self, FAR, NEAR};
use geometry::{make_rays, plucker_embed, unproject_depth, Camera, Mat3, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn axis_camera() -> Camera {
    // On +Z axis looking at the origin; forward is -Z.
    Camera::look_at(Vec3::new(0.0, 0.0, 2.0), Vec3::ZERO, 32.0, 24, 32).unwrap()
}

#[test]
fn principal_point_ray_is_camera_forward() {
    // Principal point placed exactly on the center of pixel (12, 15).
    let mut cam = axis_camera();
    cam.principal = (15.5, 12.5);
    let d = cam.pixel_direction(12, 15);
    let f = cam.forward();
    assert!((d - f).norm() < 1e-12);
}

#[test]
fn project_then_raycast_recovers_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cams = rig::rig_from_samples(&[(0.3, 0.1), (0.8, 0.6), (0.5, 0.9)], 32, 32).unwrap();
    for cam in &cams {
        for _ in 0..50 {
            let p = Vec3::new(
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
            );
            let (x, y, t) = cam.project(p).expect("in front");
            if !(0.0..cam.width as f64).contains(&x) || !(0.0..cam.height as f64).contains(&y) {
                continue;
            }
            // Ray through the exact projected image point passes through p.
            let d = cam.direction_at(x, y);
            let recovered = cam.position + d * t;
            assert!((recovered - p).norm() < 1e-9);
            // Ray through the containing pixel center passes within the
            // half-pixel footprint at distance t.
            let (row, col) = (y.floor() as usize, x.floor() as usize);
            let dpix = cam.pixel_direction(row, col);
            let closest = cam.position + dpix * t;
            let footprint = t * 0.75 / cam.focal; // half-pixel diagonal
            assert!((closest - p).norm() < footprint.max(1e-6));
            // Reprojection error below half a pixel by construction.
            let (x2, y2, t2) = cam.project(recovered).unwrap();
            assert!((x2 - x).abs() < 0.5 && (y2 - y).abs() < 0.5);
            assert!((t2 - t).abs() < 1e-6);
        }
    }
}

#[test]
fn all_ray_directions_unit_norm() {
    let cam = axis_camera();
    let rays = make_rays(&cam, NEAR, FAR).unwrap();
    for d in &rays.directions {
        assert!((d.norm() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn make_rays_rejects_degenerate_focal() {
    let mut cam = axis_camera();
    cam.focal = 0.0;
    assert!(make_rays(&cam, NEAR, FAR).is_err());
}

#[test]
fn plucker_moment_zero_for_rays_through_origin() {
    // Origin at world origin: m = o x d = 0 exactly.
    let cam = axis_camera();
    let mut rays = make_rays(&cam, NEAR, FAR).unwrap();
    for o in rays.origins.iter_mut() {
        *o = Vec3::ZERO;
    }
    let emb = plucker_embed(&rays);
    for e in &emb {
        assert_eq!(&e[3..], &[0.0, 0.0, 0.0]);
    }
}

#[test]
fn plucker_direction_orthogonal_to_moment() {
    let cam = axis_camera();
    let rays = make_rays(&cam, NEAR, FAR).unwrap();
    for e in plucker_embed(&rays) {
        let d = Vec3::new(e[0], e[1], e[2]);
        let m = Vec3::new(e[3], e[4], e[5]);
        assert!(d.dot(m).abs() < 1e-12);
    }
}

#[test]
fn plucker_invariant_to_origin_slide_along_ray() {
    let cam = axis_camera();
    let rays = make_rays(&cam, NEAR, FAR).unwrap();
    let base = plucker_embed(&rays);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut slid = rays.clone();
    for (o, d) in slid.origins.iter_mut().zip(slid.directions.iter()) {
        *o = *o + *d * rng.gen_range(-3.0..3.0);
    }
    let moved = plucker_embed(&slid);
    for (a, b) in base.iter().zip(moved.iter()) {
        for i in 0..6 {
            assert!((a[i] - b[i]).abs() < 1e-9);
        }
    }
}

#[test]
fn unproject_plane_recovers_constant_z() {
    // Analytic render of the plane z = z0 from an axis-aligned camera:
    // depth along each pixel ray satisfies o.z + t*d.z = z0.
    let cam = axis_camera();
    let z0 = 0.25;
    let n = cam.height * cam.width;
    let mut depth = vec![0.0; n];
    let mask = vec![true; n];
    for row in 0..cam.height {
        for col in 0..cam.width {
            let d = cam.pixel_direction(row, col);
            depth[row * cam.width + col] = (z0 - cam.position.z) / d.z;
        }
    }
    let pts = unproject_depth(&cam, &depth, &mask).unwrap();
    for p in pts {
        let p = p.unwrap();
        assert!((p.z - z0).abs() < 1e-6);
    }
}

#[test]
fn unproject_empty_mask_yields_no_points() {
    let cam = axis_camera();
    let n = cam.height * cam.width;
    let pts = unproject_depth(&cam, &vec![1.0; n], &vec![false; n]).unwrap();
    assert!(pts.iter().all(|p| p.is_none()));
}

#[test]
fn unproject_rejects_negative_masked_depth() {
    let cam = axis_camera();
    let n = cam.height * cam.width;
    let mut depth = vec![1.0; n];
    depth[5] = -0.5;
    assert!(unproject_depth(&cam, &depth, &vec![true; n]).is_err());
}

#[test]
fn unproject_sphere_depth_lies_on_sphere() {
    // Depth from analytic ray-sphere intersection; unprojected points must
    // sit on the sphere surface.
    let cam = axis_camera();
    let r = 0.5;
    let n = cam.height * cam.width;
    let mut depth = vec![0.0; n];
    let mut mask = vec![false; n];
    for row in 0..cam.height {
        for col in 0..cam.width {
            let d = cam.pixel_direction(row, col);
            let o = cam.position;
            let b = o.dot(d);
            let c = o.dot(o) - r * r;
            let disc = b * b - c;
            if disc > 0.0 {
                let t = -b - disc.sqrt();
                if t > 0.0 {
                    let i = row * cam.width + col;
                    depth[i] = t;
                    mask[i] = true;
                }
            }
        }
    }
    assert!(mask.iter().any(|&m| m));
    let pts = unproject_depth(&cam, &depth, &mask).unwrap();
    for p in pts.into_iter().flatten() {
        assert!((p.norm() - r).abs() < 1e-9);
    }
}

#[test]
fn camera_json_roundtrip() {
    let cam = axis_camera();
    let json = cam.to_json();
    let back = Camera::from_json(&json).unwrap();
    assert_eq!(cam, back);
    // Keys per the documented schema.
    for key in ["rotation", "position", "focal", "principal_point", "height", "width"] {
        assert!(json.contains(key), "missing {key}");
    }
}

#[test]
fn camera_rejects_non_orthonormal_rotation() {
    let mut m = Mat3::IDENTITY;
    m.m[0] = 1.5;
    assert!(Camera::new(m, Vec3::ZERO, 32.0, (16.0, 16.0), 32, 32).is_err());
}

#[test]
fn rig_cameras_on_sphere_looking_at_origin() {
    let cams = rig::rig_from_samples(&[(0.2, 0.3), (0.9, 0.8)], 32, 32).unwrap();
    for cam in cams {
        assert!((cam.position.norm() - rig::RIG_RADIUS).abs() < 1e-12);
        let to_origin = (Vec3::ZERO - cam.position).normalized();
        assert!((cam.forward() - to_origin).norm() < 1e-12);
        assert!(cam.rotation.orthonormality_defect() < 1e-9);
    }
}
