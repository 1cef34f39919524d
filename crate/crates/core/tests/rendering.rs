//! Volume renderer against the sphere tracer and basic compositing bounds.

use bn3d::camera::{look_at, pixel_center, pixel_ray, Intrinsics, Ray};
use bn3d::fixtures;
use bn3d::render::{
    compositing_weights, neus_alpha, render_ground_truth, render_ray, sphere_trace, Field, FieldSample, TraceConfig,
    VolumeConfig,
};
use bn3d::scene::build_scene;
use bn3d::{SemanticClass, Vec3};
use proptest::prelude::*;

/// Union of spheres with one colour.
#[derive(Debug)]
struct Blobs {
    spheres: Vec<(Vec3, f64)>,
    color: [f64; 3],
}

impl Field for Blobs {
    fn num_classes(&self) -> usize {
        SemanticClass::COUNT
    }
    fn sdf(&self, x: Vec3) -> f64 {
        self.spheres.iter().map(|(c, r)| (x - c).norm() - r).fold(f64::INFINITY, f64::min)
    }
    fn sample(&self, x: Vec3, _: Vec3) -> FieldSample {
        FieldSample { sdf: self.sdf(x), color: self.color, logits: vec![0.0; SemanticClass::COUNT] }
    }
    fn semantic_logits(&self, _: Vec3) -> Vec<f64> {
        vec![0.0; SemanticClass::COUNT]
    }
    fn gradient_step(&self) -> f64 {
        1e-4
    }
}

fn arb_blobs() -> impl Strategy<Value = Blobs> {
    prop::collection::vec(((-0.7..0.7f64, -0.7..0.7f64, -0.7..0.7f64), 0.05..0.6f64), 1..4).prop_map(|v| Blobs {
        spheres: v.into_iter().map(|((x, y, z), r)| (Vec3::new(x, y, z), r)).collect(),
        color: [0.2, 0.4, 0.6],
    })
}

proptest! {
    // 1000 fields × 100 rays.
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn weights_are_non_negative_and_sum_to_at_most_one(
        field in arb_blobs(),
        log_s in -1.0..4.0f64,
        n in 2usize..64,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cfg = VolumeConfig::new(Vec3::zeros(), 1.5, n, 10f64.powf(log_s));
        for _ in 0..100 {
            let origin = Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let target = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let dir = target - origin;
            if dir.norm() < 1e-6 {
                continue;
            }
            let out = render_ray(&field, &Ray::new(origin, dir.normalize()), &cfg, || rng.gen());
            for &w in &out.weights {
                prop_assert!(w >= 0.0, "negative weight {}", w);
            }
            let sum: f64 = out.weights.iter().sum();
            prop_assert!(sum <= 1.0 + 1e-12, "weights sum to {}", sum);
            prop_assert!((out.accumulation - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn alphas_of_any_distances_are_valid(f in prop::collection::vec(-5.0..5.0f64, 2..40), s in 0.01..1e4f64) {
        let mut a: Vec<f64> = f.windows(2).map(|w| neus_alpha(w[0], w[1], s)).collect();
        a.push(0.0);
        prop_assert!(a.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let w = compositing_weights(&a);
        prop_assert!(w.iter().all(|&x| x >= 0.0) && w.iter().sum::<f64>() <= 1.0 + 1e-12);
    }
}

#[test]
fn composited_depth_tracks_the_sphere_tracer() {
    let scene = build_scene(&fixtures::desk_skyscraper()).unwrap();
    let k = Intrinsics::from_fov(32, 32, 50.0);
    let eye = scene.center + Vec3::new(2.5, -1.5, 0.8);
    let pose = look_at(scene.center, eye, Vec3::z()).unwrap();
    let n = 256;
    let mut cfg = VolumeConfig::new(scene.center, scene.radius * 1.01, n, 2000.0 / scene.radius);
    cfg.bound_radius = scene.radius * 1.01;
    let trace = TraceConfig::for_scene(&scene);
    let spacing = 2.0 * cfg.bound_radius / n as f64;
    let mut hits = 0;
    for i in 0..k.pixel_count() {
        let ray = pixel_ray(&pose, &k, pixel_center(&k, i)).unwrap();
        let hit = sphere_trace(&scene, &ray, &trace);
        let out = render_ray(&scene, &ray, &cfg, || 0.5);
        // Silhouette rays graze thin slivers that coarse samples can skip.
        if hit.hit && scene.sdf(ray.at(hit.t + 4.0 * spacing)) < -2.0 * spacing {
            hits += 1;
            let depth = out.depth / out.accumulation;
            assert!(out.accumulation > 0.95, "pixel {i}: accumulation {}", out.accumulation);
            assert!((depth - hit.t).abs() <= 2.0 * spacing, "pixel {i}: depth {depth} vs traced {}", hit.t);
        }
    }
    assert!(hits > 100);
}

#[test]
fn missing_rays_accumulate_almost_nothing_and_constant_colour_is_kept() {
    let field = Blobs { spheres: vec![(Vec3::zeros(), 0.5)], color: [0.3, 0.6, 0.9] };
    let cfg = VolumeConfig::new(Vec3::zeros(), 1.5, 64, 200.0);
    let miss = render_ray(&field, &Ray::new(Vec3::new(-3.0, 1.0, 0.0), Vec3::x()), &cfg, || 0.5);
    assert!(miss.accumulation <= 0.05, "accumulation {}", miss.accumulation);
    let hit = render_ray(&field, &Ray::new(Vec3::new(-3.0, 0.0, 0.0), Vec3::x()), &cfg, || 0.5);
    assert!(hit.accumulation > 0.999);
    for c in 0..3 {
        assert!((hit.color[c] - field.color[c]).abs() < 1e-3 * 1.0f64.max(field.color[c]));
    }
}

#[test]
fn wall_filling_the_frame_is_all_wall_at_near_constant_depth() {
    let scene = build_scene(&fixtures::unit_cube()).unwrap();
    let k = Intrinsics::from_fov(48, 48, 30.0);
    // Half a metre in front of the middle of the y = 0 face.
    let target = Vec3::new(0.5, 0.0, 0.5);
    let pose = look_at(target, target - Vec3::y() * 0.5, Vec3::z()).unwrap();
    let img = render_ground_truth(&scene, &pose, &k);
    let wall = SemanticClass::Wall.id();
    assert!(img.labels().unwrap().iter().all(|&l| l == wall));
    for (i, &d) in img.depth.iter().enumerate() {
        let ray = pixel_ray(&pose, &k, pixel_center(&k, i)).unwrap();
        // Along-ray depth of a plane 0.5 m ahead: 0.5 / cos(angle to forward).
        let expected = 0.5 / ray.direction.dot(&pose.forward());
        assert!((d as f64 - expected).abs() < 1e-4, "pixel {i}: {d} vs {expected}");
    }
}
