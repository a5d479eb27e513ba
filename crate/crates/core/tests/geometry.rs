mod common;

use common::unit_vector;
use nalgebra::Vector3;
use optipromp::costs::{obstacle_cost_derivative, obstacle_cost_pointwise};
use optipromp::scene::{ClassFilter, ObstacleClass, ObstaclePrimitive, PushableObject, Scene, Shape};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_shape(kind: usize, rng: &mut ChaCha8Rng) -> Shape {
    let c = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    match kind {
        0 => Shape::Sphere { center: c, radius: rng.random_range(0.05..0.5) },
        1 => {
            let axis = unit_vector(rng) * rng.random_range(0.0..0.4);
            Shape::Capsule { p0: c - axis, p1: c + axis, radius: rng.random_range(0.02..0.3) }
        }
        _ => Shape::Box {
            center: c,
            half_extents: Vector3::new(rng.random_range(0.01..0.5), rng.random_range(0.01..0.5), rng.random_range(0.01..0.5)),
        },
    }
}

fn random_point(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2))
}

#[test]
fn sdf_sign_agrees_with_containment() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for kind in 0..3 {
        let mut inside = 0;
        for _ in 0..1000 {
            let shape = random_shape(kind, &mut rng);
            let x = random_point(&mut rng) * 0.6;
            let d = shape.signed_distance(&x);
            assert_eq!(d < 0.0, shape.contains(&x), "{shape:?} at {x:?}: d = {d}");
            inside += usize::from(d < 0.0);
        }
        assert!(inside > 20, "kind {kind}: only {inside} interior samples");
    }
}

#[test]
fn sdf_is_one_lipschitz() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for kind in 0..3 {
        let shape = random_shape(kind, &mut rng);
        for _ in 0..1000 {
            let a = random_point(&mut rng);
            let b = if rng.random_bool(0.5) { random_point(&mut rng) } else { a + unit_vector(&mut rng) * 0.01 };
            let lhs = (shape.signed_distance(&a) - shape.signed_distance(&b)).abs();
            assert!(lhs <= (a - b).norm() * (1.0 + 1e-12) + 1e-15, "{shape:?}");
        }
    }
}

#[test]
fn scene_union_is_one_lipschitz_and_matches_containment() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut scene = Scene::empty(Vector3::new(5.0, 5.0, 5.0), 0.02, 0.01);
    for k in 0..6 {
        let class = if k % 2 == 0 { ObstacleClass::Static } else { ObstacleClass::AvoidDynamic };
        let o = ObstaclePrimitive { shape: random_shape(k % 3, &mut rng), class };
        if class == ObstacleClass::Static { scene.statics.push(o) } else { scene.avoids.push(o) }
    }
    let shapes: Vec<Shape> = scene.statics.iter().chain(&scene.avoids).map(|o| o.shape).collect();
    for _ in 0..1000 {
        let a = random_point(&mut rng);
        let b = random_point(&mut rng);
        let (da, db) = (scene.sdf(&a, ClassFilter::STATIC_AND_AVOID), scene.sdf(&b, ClassFilter::STATIC_AND_AVOID));
        assert!((da - db).abs() <= (a - b).norm() * (1.0 + 1e-12));
        assert_eq!(da < 0.0, shapes.iter().any(|s| s.contains(&a)));
    }
}

#[test]
fn sdf_gradient_has_unit_length_off_the_medial_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for kind in 0..2 {
        let shape = random_shape(kind, &mut rng);
        let mut scene = Scene::empty(Vector3::zeros(), 0.02, 0.01);
        scene.statics.push(ObstaclePrimitive { shape, class: ObstacleClass::Static });
        for _ in 0..200 {
            let x = random_point(&mut rng);
            if scene.sdf(&x, ClassFilter::STATIC) < 0.01 {
                continue;
            }
            let g = scene.sdf_gradient(&x, ClassFilter::STATIC);
            assert!((g.norm() - 1.0).abs() < 1e-6, "{shape:?} at {x:?}: |g| = {}", g.norm());
        }
    }
}

fn dist_point_segment(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(&ab);
    let s = if len2 == 0.0 { 0.0 } else { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) };
    (p - (a + ab * s)).norm()
}

/// Stems the segment passes within radius of, by sampling 10,000 points along it.
fn dense_count(scene: &Scene, a: &Vector3<f64>, b: &Vector3<f64>) -> usize {
    scene
        .connections()
        .iter()
        .filter(|s| {
            let Shape::Capsule { p0, p1, radius } = s else { unreachable!() };
            (0..10_000).any(|k| {
                let x = a + (b - a) * (k as f64 / 9_999.0);
                dist_point_segment(&x, p0, p1) <= *radius
            })
        })
        .count()
}

#[test]
fn stem_intersections_match_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let mut total_hits = 0;
    for scene_index in 0..50 {
        let mut scene = Scene::empty(Vector3::new(0.0, 0.0, 1.0), 0.02, 0.01);
        for _ in 0..rng.random_range(1..5) {
            let center = random_point(&mut rng) * 0.3;
            let anchor = center + unit_vector(&mut rng) * rng.random_range(0.05..0.3);
            scene.pushables.push(PushableObject { center, radius: 0.02, anchor, stem_radius: rng.random_range(0.003..0.02) });
        }
        if rng.random_bool(0.5) {
            let p0 = random_point(&mut rng) * 0.3;
            scene.extra_stems.push(Shape::Capsule { p0, p1: p0 + unit_vector(&mut rng) * 0.2, radius: 0.01 });
        }
        let stems = scene.connections();
        for _ in 0..4 {
            // Aim through a random point near a random stem so hits and misses both occur.
            let Shape::Capsule { p0, p1, radius } = stems[rng.random_range(0..stems.len())] else { unreachable!() };
            let on_axis = p0 + (p1 - p0) * rng.random_range(0.0..1.0);
            let through = on_axis + unit_vector(&mut rng) * rng.random_range(0.0..3.0 * radius);
            let dir = unit_vector(&mut rng);
            let a = through - dir * rng.random_range(0.05..0.5);
            let b = through + dir * rng.random_range(0.05..0.5);
            let hits = scene.segment_stem_intersections(&a, &b);
            let oracle = dense_count(&scene, &a, &b);
            assert_eq!(hits.len(), oracle, "scene {scene_index}: segment {a:?} -> {b:?}");
            total_hits += oracle;
        }
    }
    assert!(total_hits > 20, "oracle saw only {total_hits} hits");
}

#[test]
fn obstacle_cost_branch_values() {
    let eps = 0.01;
    assert!((obstacle_cost_pointwise(0.0, eps) - eps / 2.0).abs() <= 1e-12);
    assert!(obstacle_cost_pointwise(eps, eps).abs() <= 1e-12);
    assert!((obstacle_cost_pointwise(-0.02, eps) - 0.025).abs() <= 1e-12);
    for d in [0.0, eps] {
        let jump = (obstacle_cost_pointwise(d + 1e-9, eps) - obstacle_cost_pointwise(d - 1e-9, eps)).abs();
        // Slopes are at most 1, so a 2e-9 window moves the value by at most 2e-9.
        assert!(jump <= 2e-9 + 1e-12, "jump {jump:e} at {d}");
    }
}

proptest! {
    #[test]
    fn obstacle_cost_is_nonincreasing_and_nonnegative(a in -0.2f64..0.2, b in -0.2f64..0.2, eps in 1e-3f64..0.1) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(obstacle_cost_pointwise(lo, eps) >= obstacle_cost_pointwise(hi, eps));
        prop_assert!(obstacle_cost_pointwise(a, eps) >= 0.0);
    }

    #[test]
    fn obstacle_derivative_matches_difference_quotient(d in -0.2f64..0.2, eps in 1e-3f64..0.1) {
        prop_assume!(d.abs() > 1e-5 && (d - eps).abs() > 1e-5);
        let h = 1e-7;
        let fd = (obstacle_cost_pointwise(d + h, eps) - obstacle_cost_pointwise(d - h, eps)) / (2.0 * h);
        prop_assert!((fd - obstacle_cost_derivative(d, eps)).abs() < 1e-6);
    }

    #[test]
    fn translated_shapes_keep_distances(
        seed in any::<u64>(),
        off in prop::array::uniform3(-2.0f64..2.0),
        x in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = random_shape((seed % 3) as usize, &mut rng);
        let off = Vector3::from(off);
        let x = Vector3::from(x);
        let moved = shape.translated(&off).signed_distance(&(x + off));
        prop_assert!((moved - shape.signed_distance(&x)).abs() < 1e-12);
    }
}
