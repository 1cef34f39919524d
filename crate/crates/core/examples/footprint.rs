//! Extracts building footprints as marching-squares contours of a horizontal
//! SDF slice and scores them against the true polygon with raster IoU.
//!
//! cargo run --release --example footprint -- [grid]

use bn3d::characteristics::{footprint, footprint_iou, footprint_to_csv, FootprintPolygon, GridSpec};
use bn3d::fixtures;
use bn3d::scene::{build_scene, ground_truth};

fn main() {
    let n: usize = std::env::args().nth(1).map_or(256, |s| s.parse().unwrap());
    let out = std::path::Path::new("target/examples/footprints");
    std::fs::create_dir_all(out).unwrap();
    for (name, spec) in fixtures::all_kinds() {
        let scene = build_scene(&spec).unwrap();
        let truth = ground_truth(&spec).unwrap();
        let grid = GridSpec::above_ground(scene.center, scene.radius, n).unwrap();
        // Slice half a cell above the ground plane.
        let z = 0.5 * grid.max_cell();
        let fp = footprint(&scene, &grid, z).unwrap();
        let (iou, warning) = footprint_iou(&fp, &FootprintPolygon::from_ring(truth.footprint.clone()));
        std::fs::write(out.join(format!("{name}.csv")), footprint_to_csv(&fp)).unwrap();
        println!(
            "{name:<12} {} loop(s), {:>4} vertices, area {:>8.2} m² (truth {:>8.2}), IoU {iou:.4}{}",
            fp.loops.len(),
            fp.vertex_count(),
            fp.area(),
            truth.footprint_area,
            if warning { " (raster warning)" } else { "" }
        );
    }
    println!("contours written to {}", out.display());
}
