//! Runs the estimation pipeline (marching cubes, semantic labelling, WWR,
//! footprint) on the exact SDF of each building kind and compares with the
//! closed-form ground truth. No network is involved.
//!
//! cargo run --release --example estimate_analytic -- [grid]

use std::time::Instant;

use bn3d::characteristics::{estimate, GridSpec};
use bn3d::fixtures;
use bn3d::scene::{build_scene, ground_truth};

fn main() {
    let n: usize = std::env::args().nth(1).map_or(128, |s| s.parse().unwrap());
    println!("{:<12} {:>8} {:>8} {:>9} {:>9} {:>8}", "building", "wwr", "truth", "error %", "IoU", "seconds");
    for (name, spec) in fixtures::all_kinds() {
        let t = Instant::now();
        let scene = build_scene(&spec).unwrap();
        let truth = ground_truth(&spec).unwrap();
        let grid = GridSpec::above_ground(scene.center, scene.radius, n).unwrap();
        // Labels switch within a band of two cells around openings.
        let scene = scene.with_label_band(2.0 * grid.max_cell());
        let c = estimate(&scene, &grid, 3, name, Some(&truth)).unwrap();
        let g = c.report.ground_truth.unwrap();
        println!(
            "{name:<12} {:>8.4} {:>8.4} {:>9.2} {:>9.4} {:>8.1}",
            c.wwr.wwr,
            truth.wwr,
            g.wwr_error_pct,
            g.footprint_iou,
            t.elapsed().as_secs_f64()
        );
    }
}
