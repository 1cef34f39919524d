//! Loads a trained checkpoint, extracts the semantic mesh and reports the
//! envelope characteristics against a fixture's ground truth. Pair it with
//! `train_field`.
//!
//! cargo run --release --example estimate_checkpoint -- [checkpoint.json] [fixture] [grid] [out_dir]

use std::path::PathBuf;

use bn3d::characteristics::{estimate, write_outputs, GridSpec};
use bn3d::fixtures;
use bn3d::scene::ground_truth;
use bn3d::train::Checkpoint;
use bn3d::Vec3;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let path = args.get(1).map_or("target/examples/checkpoint.json", String::as_str);
    let name = args.get(2).map_or("unit_cube_one_window", String::as_str);
    let n: usize = args.get(3).map_or(96, |s| s.parse().unwrap());
    let out = PathBuf::from(args.get(4).map_or("target/examples/estimate", String::as_str));

    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{path}: {e} (run the train_field example first)"));
    let net = Checkpoint::from_json(&text).and_then(|c| c.network()).unwrap();
    let truth = ground_truth(&fixtures::by_name(name).expect("known fixture")).unwrap();
    // The network frame maps the scene's bounding sphere to the unit sphere.
    let grid = GridSpec::above_ground(Vec3::from(net.frame.center), net.frame.scale, n).unwrap();
    let c = estimate(&net, &grid, 3, path, Some(&truth)).unwrap();
    std::fs::create_dir_all(&out).unwrap();
    write_outputs(&c, &out).unwrap();

    let r = &c.report;
    println!("mesh: {} triangles, outputs in {}", r.triangles, out.display());
    println!("wwr {:.4}, window {:.3} m², wall {:.3} m², footprint {:.3} m²", r.wwr, r.window_area, r.wall_area, r.footprint_area);
    if let Some(g) = &r.ground_truth {
        println!("truth wwr {:.4}: error {:.2}%, footprint IoU {:.4}", g.wwr, g.wwr_error_pct, g.footprint_iou);
    }
}
