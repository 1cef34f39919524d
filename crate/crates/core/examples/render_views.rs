//! Renders one view of an L-shaped building twice: with the exact sphere
//! tracer and with the SDF volume renderer applied to the same analytic
//! field, and compares colour, labels and depth.
//!
//! cargo run --release --example render_views -- [out_dir]

use std::path::PathBuf;

use bn3d::camera::{sample_poses, Intrinsics, PoseSamplerConfig};
use bn3d::fixtures;
use bn3d::io::{encode_pfm, encode_pgm, encode_ppm, quantize, write_file};
use bn3d::render::{render_ground_truth, render_image, MultiModalImage, VolumeConfig};
use bn3d::scene::build_scene;

fn save(img: &MultiModalImage, out: &std::path::Path, stem: &str) {
    let (w, h) = (img.width, img.height);
    let rgb: Vec<[u8; 3]> = img.rgb.iter().map(|c| c.map(quantize)).collect();
    // Spread the label ids over the grey range so the image is readable.
    let labels: Vec<u8> = img.label_ids().iter().map(|&l| l * 60).collect();
    write_file(&out.join(format!("{stem}_color.ppm")), &encode_ppm(w, h, &rgb)).unwrap();
    write_file(&out.join(format!("{stem}_semantic.pgm")), &encode_pgm(w, h, &labels)).unwrap();
    write_file(&out.join(format!("{stem}_depth.pfm")), &encode_pfm(w, h, &img.depth)).unwrap();
}

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/examples/render".into()));
    std::fs::create_dir_all(&out).unwrap();
    let scene = build_scene(&fixtures::l_shaped()).unwrap();
    let k = Intrinsics::from_fov(96, 96, 50.0);
    let pose = sample_poses(&scene, 1, scene.radius * 3.0, 4, &PoseSamplerConfig::new(k)).unwrap()[0];

    let exact = render_ground_truth(&scene, &pose, &k);
    // A sharp sigmoid makes the volume renderer approach the traced surface.
    let cfg = VolumeConfig::new(scene.center, scene.radius * 1.01, 256, 2000.0 / scene.radius);
    let volume = render_image(&scene, &pose, &k, &cfg, 0, 0);
    save(&exact, &out, "traced");
    save(&volume, &out, "volume");

    let (lt, lv) = (exact.label_ids(), volume.label_ids());
    let agree = lt.iter().zip(&lv).filter(|(a, b)| a == b).count() as f64 / lt.len() as f64;
    let depth: Vec<f64> = exact
        .depth
        .iter()
        .zip(&volume.depth)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (a - b).abs() as f64)
        .collect();
    let mut sorted = depth.clone();
    sorted.sort_by(f64::total_cmp);
    let colour: f64 = exact.rgb.iter().zip(&volume.rgb).map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).abs() as f64).sum::<f64>() / 3.0).sum::<f64>()
        / exact.rgb.len() as f64;
    println!("images written to {}", out.display());
    println!("label agreement {:.2}%", 100.0 * agree);
    println!("median depth difference {:.4} m over {} pixels", sorted.get(sorted.len() / 2).copied().unwrap_or(0.0), depth.len());
    println!("mean colour difference {colour:.4}");
}
