//! Trainer determinism, resumption and initialisation.

use bn3d::camera::{sample_poses, Intrinsics, PoseSamplerConfig};
use bn3d::fixtures;
use bn3d::neural::{FieldNetwork, Frame, NetworkConfig};
use bn3d::render::{render_ground_truth, Field};
use bn3d::scene::build_scene;
use bn3d::train::{batch_loss_and_grad, Profile, StepRecord, Trainer, TrainingData};
use bn3d::Vec3;
use rand::{Rng, SeedableRng};

fn unit_cube_data(net: &FieldNetwork, views: usize, size: u32) -> TrainingData {
    let scene = build_scene(&fixtures::unit_cube()).unwrap();
    let k = Intrinsics::from_fov(size, size, 50.0);
    let poses = sample_poses(&scene, views, scene.radius * 3.0, 0, &PoseSamplerConfig::new(k)).unwrap();
    let imgs: Vec<_> = poses.iter().map(|p| render_ground_truth(&scene, p, &k)).collect();
    let v: Vec<_> = imgs.iter().zip(&poses).map(|(i, p)| (i, p, &k)).collect();
    TrainingData::from_views(&v, &net.frame).unwrap()
}

fn tiny_trainer(iterations: usize, batch: usize) -> (Trainer, TrainingData) {
    let scene = build_scene(&fixtures::unit_cube()).unwrap();
    let net = FieldNetwork::for_scene(NetworkConfig::tiny(), &scene, 0).unwrap();
    let data = unit_cube_data(&net, 4, 16);
    let mut cfg = Profile::desk().train;
    cfg.iterations = iterations;
    cfg.warmup = 10;
    cfg.batch_rays = batch;
    cfg.n_samples = 16;
    (Trainer::new(net, cfg).unwrap(), data)
}

#[test]
fn two_runs_with_one_seed_are_bitwise_identical() {
    let run = || {
        let (mut t, data) = tiny_trainer(100, 64);
        t.run(&data, |_| {}, |_| {}).unwrap();
        t.checkpoint()
    };
    let (a, b) = (run(), run());
    let bits = |p: &[f64]| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.params), bits(&b.params));
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn resuming_from_a_checkpoint_replays_the_uninterrupted_run() {
    let (mut straight, data) = tiny_trainer(60, 64);
    straight.run(&data, |_| {}, |_| {}).unwrap();
    let (mut first, _) = tiny_trainer(60, 64);
    for _ in 0..25 {
        first.step_once(&data).unwrap();
    }
    let saved = bn3d::train::Checkpoint::from_json(&first.checkpoint().to_json()).unwrap();
    let mut resumed = Trainer::from_checkpoint(&saved).unwrap();
    resumed.run(&data, |_| {}, |_| {}).unwrap();
    assert_eq!(resumed.step, 60);
    assert_eq!(resumed.checkpoint().to_json(), straight.checkpoint().to_json());
}

#[test]
fn without_semantic_weight_the_semantic_head_gets_no_gradient() {
    let (mut t, data) = tiny_trainer(100, 32);
    t.config.lambda_semantic = 0.0;
    let (_, g) = batch_loss_and_grad(&t.net, &data.rays[..32], &t.context(0)).unwrap();
    let mut flat: Vec<f64> = Vec::new();
    for (w, b) in &g.semantic.layers {
        flat.extend(w.iter().chain(b.iter()));
    }
    assert!(!flat.is_empty() && flat.iter().all(|&v| v == 0.0));
    // The distance trunk still learns.
    let (w, _) = &g.sdf.layers[0];
    assert!(w.iter().any(|&v| v != 0.0));
}

#[test]
fn inverse_std_receives_gradient_on_surface_crossing_rays() {
    let (t, data) = tiny_trainer(100, 32);
    // Rays aimed at the cube start outside and end inside the initial sphere.
    let (_, g) = batch_loss_and_grad(&t.net, &data.rays[..64], &t.context(0)).unwrap();
    assert!(g.rho != 0.0);
}

#[test]
fn sphere_initialisation_matches_the_target_sphere() {
    let cfg = NetworkConfig::desk();
    let mut net = FieldNetwork::new(cfg.clone(), Frame { center: [0.0; 3], scale: 1.0 }, 1e-3, 0);
    assert!(cfg.sphere_init_steps > 0);
    net.init_sphere(cfg.sphere_init_steps, 0).unwrap();
    let bias = cfg.sphere_bias;
    assert!((net.sdf(Vec3::zeros()) + bias).abs() <= 0.05 * bias, "f(0) = {}", net.sdf(Vec3::zeros()));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if d.norm() < 1e-3 {
            continue;
        }
        let p = d.normalize() * bias;
        assert!(net.sdf(p).abs() <= 0.05 * bias, "f on the sphere = {}", net.sdf(p));
        // Any smooth fit has a stationary point at the cone tip, so the norm
        // is checked away from it.
        let q = d.normalize() * rng.gen_range(0.3 * bias..cfg.bound_radius);
        let g = net.gradient(q).norm();
        assert!((0.8..=1.2).contains(&g), "|grad f| = {g} at {q:?}");
    }
}

/// The desk fixture in miniature: unit cube, 20 views at 64², tiny network,
/// 3000 steps.
#[test]
fn desk_scale_training_reduces_the_colour_loss() {
    let scene = build_scene(&fixtures::unit_cube()).unwrap();
    let net = FieldNetwork::for_scene(NetworkConfig::tiny(), &scene, 0).unwrap();
    let data = unit_cube_data(&net, 20, 64);
    let mut trainer = Trainer::new(net, Profile::desk().train).unwrap();
    let mut log: Vec<StepRecord> = Vec::new();
    trainer.config.log_every = 10;
    trainer.run(&data, |r| log.push(r.clone()), |_| {}).unwrap();
    let window = |r: &[StepRecord]| r.iter().map(|r| r.loss.color).sum::<f64>() / r.len() as f64;
    let first = window(&log[..3]);
    let last = window(&log[log.len() - 10..]);
    assert!(last <= 0.25 * first, "colour loss {first} -> {last}");
    // Least-squares slope of the total loss over the last tenth of training.
    let tail = &log[log.len() - log.len() / 10..];
    let n = tail.len() as f64;
    let mx = tail.iter().map(|r| r.step as f64).sum::<f64>() / n;
    let my = tail.iter().map(|r| r.loss.total).sum::<f64>() / n;
    let cov: f64 = tail.iter().map(|r| (r.step as f64 - mx) * (r.loss.total - my)).sum();
    assert!(cov < 0.0, "total loss is not decreasing at the end (covariance {cov})");
}
