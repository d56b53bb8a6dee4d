use geometry::Vec3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scene::{Deformation, Primitive, SceneItem, SceneSpec};

const PALETTE: [[f64; 3]; 8] = [
    [0.85, 0.25, 0.2],
    [0.2, 0.6, 0.85],
    [0.3, 0.75, 0.3],
    [0.9, 0.7, 0.15],
    [0.7, 0.3, 0.8],
    [0.9, 0.45, 0.6],
    [0.25, 0.8, 0.7],
    [0.8, 0.5, 0.25],
];

fn unit_axis(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.2 {
            return v.normalized().to_array();
        }
    }
}

fn color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    PALETTE[rng.gen_range(0..PALETTE.len())]
}

/// Draws one animated scene. Parameter ranges keep every shape inside
/// [-0.9, 0.9]^3 at all phases: rest geometry stays within radius 0.55 of
/// the origin, translations add at most 0.3, scaling at most 25%.
pub fn sample_scene(rng: &mut ChaCha8Rng, n_keyframes: usize) -> SceneSpec {
    let kind = rng.gen_range(0..4u32);
    let items = match kind {
        // Single rotating/translating primitive.
        0 => {
            let prim = sample_primitive(rng, 0.45);
            let deform = if rng.gen_bool(0.5) {
                Deformation::Rotate {
                    axis: unit_axis(rng),
                    pivot: [0.0, 0.0, 0.0],
                    total_angle: rng.gen_range(0.6..1.6) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                }
            } else {
                sample_translation(rng)
            };
            vec![SceneItem { primitive: prim, deformation: deform, color: color(rng) }]
        }
        // Two-link articulation: static base capsule + hinged second link.
        1 => {
            let r = rng.gen_range(0.08..0.13);
            let joint = [0.0, rng.gen_range(-0.1..0.1), 0.0];
            let tip_a = [rng.gen_range(-0.5..-0.3), joint[1] + rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
            let tip_b = [rng.gen_range(0.3..0.5), joint[1] + rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
            let link1 = Primitive::Capsule { a: tip_a, b: joint, radius: r };
            let link2 = Primitive::Capsule { a: joint, b: tip_b, radius: r };
            let hinge_axis = unit_axis(rng);
            vec![
                SceneItem { primitive: link1, deformation: Deformation::Static, color: color(rng) },
                SceneItem {
                    primitive: link2,
                    deformation: Deformation::Hinge {
                        axis: hinge_axis,
                        hinge: joint,
                        total_angle: rng.gen_range(0.5..1.1)
                            * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                    },
                    color: color(rng),
                },
            ]
        }
        // Breathing (periodically scaled) primitive.
        2 => {
            let prim = sample_primitive(rng, 0.5);
            let amp = rng.gen_range(0.12..0.25);
            vec![SceneItem {
                primitive: prim,
                deformation: Deformation::Scale {
                    center: [0.0, 0.0, 0.0],
                    amp: [
                        amp * rng.gen_range(0.3..1.0),
                        amp * rng.gen_range(0.3..1.0),
                        amp * rng.gen_range(0.3..1.0),
                    ],
                    freq: rng.gen_range(0.5..1.0),
                },
                color: color(rng),
            }]
        }
        // Two independently moving primitives.
        _ => {
            let p1 = sample_primitive_at(rng, [-0.35, 0.0, 0.0], 0.3);
            let p2 = sample_primitive_at(rng, [0.35, 0.0, 0.0], 0.3);
            vec![
                SceneItem { primitive: p1, deformation: sample_translation(rng), color: color(rng) },
                SceneItem {
                    primitive: p2,
                    deformation: Deformation::Rotate {
                        axis: unit_axis(rng),
                        pivot: [0.35, 0.0, 0.0],
                        total_angle: rng.gen_range(0.6..1.4),
                    },
                    color: color(rng),
                },
            ]
        }
    };
    SceneSpec { items, n_keyframes }
}

fn sample_translation(rng: &mut ChaCha8Rng) -> Deformation {
    let dir = unit_axis(rng);
    let lin_len = rng.gen_range(0.15..0.3);
    let amp_len = rng.gen_range(0.0..0.1);
    Deformation::Translate {
        lin: [dir[0] * lin_len, dir[1] * lin_len, dir[2] * lin_len],
        amp: [dir[1] * amp_len, dir[2] * amp_len, dir[0] * amp_len],
        freq: rng.gen_range(0.5..1.0),
    }
}

fn sample_primitive(rng: &mut ChaCha8Rng, extent: f64) -> Primitive {
    let offset = [
        rng.gen_range(-0.15..0.15),
        rng.gen_range(-0.15..0.15),
        rng.gen_range(-0.15..0.15),
    ];
    sample_primitive_at(rng, offset, extent)
}

fn sample_primitive_at(rng: &mut ChaCha8Rng, center: [f64; 3], extent: f64) -> Primitive {
    let c = Vec3::from_array(center);
    match rng.gen_range(0..3u32) {
        0 => Primitive::Sphere { center, radius: rng.gen_range(0.45..1.0) * extent },
        1 => {
            let half = extent * rng.gen_range(0.5..0.9);
            let d = Vec3::from_array(unit_axis(rng)) * half;
            Primitive::Capsule {
                a: (c - d).to_array(),
                b: (c + d).to_array(),
                radius: rng.gen_range(0.25..0.45) * extent,
            }
        }
        _ => Primitive::RoundedBox {
            center,
            half: [
                extent * rng.gen_range(0.35..0.7),
                extent * rng.gen_range(0.35..0.7),
                extent * rng.gen_range(0.35..0.7),
            ],
            round: 0.05 * extent,
        },
    }
}
