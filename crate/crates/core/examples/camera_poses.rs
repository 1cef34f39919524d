//! Samples training camera poses around a building: distinct viewing
//! directions, the building fully in frame, no camera inside geometry.
//!
//! cargo run --release --example camera_poses -- [views] [seed]

use bn3d::camera::{building_mask, check_framing, sample_poses, Intrinsics, PoseSamplerConfig};
use bn3d::fixtures;
use bn3d::scene::build_scene;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map_or(20, |s| s.parse().unwrap());
    let seed: u64 = args.get(2).map_or(0, |s| s.parse().unwrap());
    let scene = build_scene(&fixtures::desk_skyscraper()).unwrap();
    let k = Intrinsics::from_fov(64, 64, 50.0);
    let cfg = PoseSamplerConfig::new(k);
    let poses = sample_poses(&scene, n, scene.radius * 3.0, seed, &cfg).unwrap();

    println!("{:>4} {:>9} {:>9} {:>8} {:>9}", "view", "azimuth", "elevation", "range", "coverage");
    for (i, p) in poses.iter().enumerate() {
        let d = p.position - scene.center;
        let mask = building_mask(&scene, p, &k);
        let coverage = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
        assert!(check_framing(&mask, &k, cfg.border_px, cfg.min_coverage).is_ok());
        println!(
            "{i:>4} {:>8.1}° {:>8.1}° {:>8.2} {:>8.1}%",
            d.y.atan2(d.x).to_degrees(),
            (d.z / d.norm()).asin().to_degrees(),
            d.norm(),
            100.0 * coverage
        );
    }
    let mut min_sep = f64::INFINITY;
    for (i, a) in poses.iter().enumerate() {
        for b in &poses[i + 1..] {
            let (u, v) = ((a.position - scene.center).normalize(), (b.position - scene.center).normalize());
            min_sep = min_sep.min(u.dot(&v).clamp(-1.0, 1.0).acos().to_degrees());
        }
    }
    println!("closest pair of viewing directions {min_sep:.1}° apart (required {:.1}°)", cfg.min_separation(n).to_degrees());
}
