//! Fits the semantic SDF network to rendered views of a unit cube and saves
//! a checkpoint. Short by default; pass a larger step count for a real fit.
//!
//! cargo run --release --example train_field -- [steps] [batch] [checkpoint.json]

use bn3d::camera::{sample_poses, Intrinsics, PoseSamplerConfig};
use bn3d::fixtures;
use bn3d::neural::FieldNetwork;
use bn3d::render::render_ground_truth;
use bn3d::scene::build_scene;
use bn3d::train::{Profile, StepRecord, Trainer, TrainingData};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map_or(300, |s| s.parse().unwrap());
    let batch: usize = args.get(2).map_or(256, |s| s.parse().unwrap());
    let out = args.get(3).cloned().unwrap_or_else(|| "target/examples/checkpoint.json".into());

    let mut profile = Profile::desk();
    profile.train.iterations = steps;
    profile.train.warmup = profile.train.warmup.min(steps / 10);
    profile.train.batch_rays = batch;
    profile.train.log_every = (steps / 20).max(1);

    let scene = build_scene(&fixtures::unit_cube_one_window()).unwrap();
    let k = Intrinsics::from_fov(profile.image_size, profile.image_size, profile.fov_deg);
    let poses = sample_poses(&scene, profile.views, scene.radius * 3.0, 0, &PoseSamplerConfig::new(k)).unwrap();
    let images: Vec<_> = poses.iter().map(|p| render_ground_truth(&scene, p, &k)).collect();
    let net = FieldNetwork::for_scene(profile.network.clone(), &scene, 0).unwrap();
    println!("{} parameters, inv_std {:.2}", net.num_params(), net.inv_std());

    let views: Vec<_> = images.iter().zip(&poses).map(|(i, p)| (i, p, &k)).collect();
    let data = TrainingData::from_views(&views, &net.frame).unwrap();
    let mut trainer = Trainer::new(net, profile.train.clone()).unwrap();
    println!("{}", StepRecord::CSV_HEADER);
    trainer.run(&data, |r| println!("{}", r.csv_row()), |_| {}).unwrap();

    if let Some(dir) = std::path::Path::new(&out).parent() {
        std::fs::create_dir_all(dir).unwrap();
    }
    std::fs::write(&out, trainer.checkpoint().to_json()).unwrap();
    println!("checkpoint after {} steps written to {out}", trainer.step);
}
