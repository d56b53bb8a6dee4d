use geometry::rig::{FAR, NEAR};
use geometry::{unproject_depth, Camera, Mat3, Vec3};
use synth::{
    evaluate_scene, generate_dataset, render_ground_truth, rng, sample_scene, scene_sdf,
    Dataset, DatasetConfig, Deformation, Primitive, SceneItem, SceneSpec,
};

fn sphere_scene(radius: f64, deformation: Deformation) -> SceneSpec {
    SceneSpec {
        items: vec![SceneItem {
            primitive: Primitive::Sphere { center: [0.0; 3], radius },
            deformation,
            color: [0.8, 0.3, 0.2],
        }],
        n_keyframes: 16,
    }
}

fn axis_camera(hw: usize) -> Camera {
    Camera::look_at(Vec3::new(0.0, 0.0, 2.0), Vec3::ZERO, 0.8 * hw as f64, hw, hw).unwrap()
}

#[test]
fn canonical_is_identity_at_first_keyframe() {
    let spec = sphere_scene(
        0.5,
        Deformation::Rotate { axis: [0.0, 1.0, 0.0], pivot: [0.0; 3], total_angle: 1.2 },
    );
    for p in [Vec3::new(0.3, 0.2, -0.1), Vec3::new(-0.5, 0.0, 0.4)] {
        let s = evaluate_scene(&spec, 1.0, p).unwrap();
        assert_eq!(s.canonical.to_array(), p.to_array());
    }
}

#[test]
fn rigid_rotation_canonical_is_inverse_rotation() {
    let angle_total = 1.2;
    let spec = sphere_scene(
        0.5,
        Deformation::Rotate { axis: [0.0, 1.0, 0.0], pivot: [0.0; 3], total_angle: angle_total },
    );
    let k = 9.0; // phase 8/15
    let phase = spec.phase(k);
    let r_inv = Mat3::rotation(Vec3::new(0.0, 1.0, 0.0), -angle_total * phase);
    let p = Vec3::new(0.3, 0.1, -0.2);
    let s = evaluate_scene(&spec, k, p).unwrap();
    let want = r_inv.mul_vec(p);
    assert!((s.canonical - want).norm() < 1e-12);
}

#[test]
fn sphere_surface_point_has_zero_sdf() {
    let spec = sphere_scene(0.5, Deformation::Static);
    let s = evaluate_scene(&spec, 1.0, Vec3::new(0.5, 0.0, 0.0)).unwrap();
    assert!(s.sdf.abs() < 1e-12);
}

#[test]
fn evaluate_scene_rejects_out_of_range_timestep() {
    let spec = sphere_scene(0.5, Deformation::Static);
    assert!(evaluate_scene(&spec, 0.5, Vec3::ZERO).is_err());
    assert!(evaluate_scene(&spec, 17.0, Vec3::ZERO).is_err());
}

#[test]
fn central_pixel_depth_matches_ray_sphere_intersection() {
    let r = 0.5;
    let spec = sphere_scene(r, Deformation::Static);
    let mut cam = axis_camera(9);
    cam.principal = (4.5, 4.5);
    let gt = render_ground_truth(&spec, 1.0, &cam, NEAR, FAR).unwrap();
    let center = 4 * 9 + 4;
    assert!(gt.mask[center]);
    let expected = cam.position.norm() - r;
    assert!((gt.depth[center] - expected).abs() < 1e-4, "depth {}", gt.depth[center]);
}

#[test]
fn mask_area_matches_projected_disc() {
    let r = 0.5;
    let spec = sphere_scene(r, Deformation::Static);
    let cam = axis_camera(64);
    let gt = render_ground_truth(&spec, 1.0, &cam, NEAR, FAR).unwrap();
    let count = gt.mask.iter().filter(|&&m| m).count() as f64;
    let d = cam.position.norm();
    // Silhouette radius in pixels: f * r / sqrt(d^2 - r^2).
    let rho = cam.focal * r / (d * d - r * r).sqrt();
    let expected = std::f64::consts::PI * rho * rho;
    let rel = (count - expected).abs() / expected;
    assert!(rel < 0.05, "mask area {count} vs {expected} (rel {rel})");
}

#[test]
fn identity_motion_canonical_equals_world_hit() {
    let spec = sphere_scene(0.5, Deformation::Static);
    let cam = axis_camera(16);
    let gt = render_ground_truth(&spec, 7.0, &cam, NEAR, FAR).unwrap();
    for row in 0..16 {
        for col in 0..16 {
            let i = row * 16 + col;
            if !gt.mask[i] {
                assert_eq!(gt.canonical[i], [0.0; 3]);
                continue;
            }
            let p = cam.position + cam.pixel_direction(row, col) * gt.depth[i];
            for a in 0..3 {
                assert!((gt.canonical[i][a] - p.to_array()[a]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn canonical_labels_constant_along_material_trajectories() {
    // Track an analytic material point through every deformation kind;
    // canonical(position(k), k) must equal the rest point to 1e-9.
    let u = 1.0 / 3.0_f64.sqrt();
    let deformations = vec![
        Deformation::Rotate { axis: [u, u, u], pivot: [0.1, 0.0, 0.0], total_angle: 1.0 },
        Deformation::Translate { lin: [0.2, 0.05, -0.1], amp: [0.0, 0.05, 0.05], freq: 0.8 },
        Deformation::Hinge { axis: [0.0, 0.0, 1.0], hinge: [0.0, 0.1, 0.0], total_angle: 0.9 },
        Deformation::Scale { center: [0.0; 3], amp: [0.2, 0.1, 0.15], freq: 0.7 },
    ];
    for deform in deformations {
        let spec = sphere_scene(0.4, deform.clone());
        let rest = Vec3::new(0.2, 0.25, -0.15);
        for k in 1..=16 {
            let phase = spec.phase(k as f64);
            let pos = deform.apply(rest, phase);
            let s = evaluate_scene(&spec, k as f64, pos).unwrap();
            assert!(
                (s.canonical - rest).norm() < 1e-9,
                "{deform:?} k={k}: {:?} vs {:?}",
                s.canonical,
                rest
            );
        }
    }
}

#[test]
fn depth_unprojection_closure_on_sdf() {
    let mut rng = rng::stream(99, "test/closure");
    use rand::Rng;
    for trial in 0..4 {
        let spec = sample_scene(&mut rng, 16);
        let cam = axis_camera(24);
        let k = rng.gen_range(1..=16) as f64;
        let gt = render_ground_truth(&spec, k, &cam, NEAR, FAR).unwrap();
        let pts = unproject_depth(&cam, &gt.depth, &gt.mask).unwrap();
        let phase = spec.phase(k);
        for p in pts.into_iter().flatten() {
            let d = scene_sdf(&spec, phase, p);
            assert!(d.abs() < 1e-3, "trial {trial}: |sdf| = {}", d.abs());
        }
    }
}

#[test]
fn sampled_scenes_stay_inside_the_margin_box() {
    let mut rng = rng::stream(7, "test/containment");
    for _ in 0..40 {
        let spec = sample_scene(&mut rng, 16);
        for k in 1..=16 {
            let phase = spec.phase(k as f64);
            for item in &spec.items {
                // March the rest-pose surface via rejection on a coarse grid.
                for gx in 0..8 {
                    for gy in 0..8 {
                        for gz in 0..8 {
                            let q = Vec3::new(
                                -0.9 + 1.8 * gx as f64 / 7.0,
                                -0.9 + 1.8 * gy as f64 / 7.0,
                                -0.9 + 1.8 * gz as f64 / 7.0,
                            );
                            if item.primitive.sdf(q) <= 0.0 {
                                let w = item.deformation.apply(q, phase);
                                assert!(
                                    w.abs().max_component() <= 0.9,
                                    "point {w:?} escaped at k={k}"
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn dataset_generation_is_deterministic_and_split_disjoint() {
    let config = DatasetConfig {
        train_scenes: 2,
        heldout_scenes: 1,
        n_keyframes: 3,
        n_views_train: 2,
        n_views_eval: 1,
        image_size: 8,
        seed: 42,
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    generate_dataset(&config, d1.path()).unwrap();
    generate_dataset(&config, d2.path()).unwrap();

    // Byte-identical trees.
    let mut files1 = collect_files(d1.path());
    files1.sort();
    let mut files2 = collect_files(d2.path());
    files2.sort();
    let rel = |files: &[std::path::PathBuf], root: &std::path::Path| -> Vec<std::path::PathBuf> {
        files.iter().map(|f| f.strip_prefix(root).unwrap().to_path_buf()).collect()
    };
    assert_eq!(rel(&files1, d1.path()), rel(&files2, d2.path()));
    for (f1, f2) in files1.iter().zip(files2.iter()) {
        assert_eq!(
            std::fs::read(f1).unwrap(),
            std::fs::read(f2).unwrap(),
            "differs: {}",
            f1.display()
        );
    }

    let ds = Dataset::open(d1.path()).unwrap();
    assert_eq!(ds.scenes.len(), 3);
    let train: Vec<_> = ds.split("train").iter().map(|s| s.id.clone()).collect();
    let held: Vec<_> = ds.split("heldout").iter().map(|s| s.id.clone()).collect();
    assert_eq!(train.len(), 2);
    assert_eq!(held.len(), 1);
    assert!(train.iter().all(|t| !held.contains(t)));
    // Keyframe count honored.
    for s in &ds.scenes {
        assert_eq!(s.spec.n_keyframes, 3);
        for k in 1..=3 {
            let obs = ds.load_view(&s.id, k, 0).unwrap();
            assert_eq!(obs.height, 8);
            // Canonical valid exactly where mask set.
            for (i, m) in obs.mask.iter().enumerate() {
                if !m {
                    assert_eq!(obs.canonical[i], [0.0; 3]);
                }
            }
        }
    }
}

fn collect_files(root: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out
}

#[test]
fn pfm_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.pfm");
    let data: Vec<f64> = (0..24).map(|i| i as f64 * 0.25 - 2.0).collect();
    synth::io::write_pfm(&p, &data, 2, 4, 3).unwrap();
    let (back, h, w, c) = synth::io::read_pfm(&p).unwrap();
    assert_eq!((h, w, c), (2, 4, 3));
    for (a, b) in back.iter().zip(data.iter()) {
        assert_eq!(*a, *b as f32 as f64);
    }
}
