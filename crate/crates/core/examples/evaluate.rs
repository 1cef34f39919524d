//! Aggregates estimate and baseline reports over several buildings into the
//! evaluation table: mean ± std of WWR and area errors per method, and
//! footprint IoU for the 3D pipeline.
//!
//! cargo run --release --example evaluate

use bn3d::baseline2d::{run_baseline, Combine, Method, ViewMode};
use bn3d::characteristics::{estimate, GridSpec};
use bn3d::cli::{evaluate, AnyReport};
use bn3d::dataset::{Dataset, FacadeViews, GenerateOptions};
use bn3d::fixtures;
use bn3d::scene::{build_scene, ground_truth};

fn main() {
    let opts = GenerateOptions { views: 0, facade_views: FacadeViews::Both, facade_image_size: 256, ..GenerateOptions::default() };
    let mut reports = Vec::new();
    for name in ["cube", "elongated", "unequal_facades"] {
        let spec = fixtures::by_name(name).unwrap();
        let scene = build_scene(&spec).unwrap();
        let truth = ground_truth(&spec).unwrap();
        let grid = GridSpec::above_ground(scene.center, scene.radius, 128).unwrap();
        let scene = scene.with_label_band(2.0 * grid.max_cell());
        let c = estimate(&scene, &grid, 3, name, Some(&truth)).unwrap();
        reports.push(AnyReport::Estimate(c.report));

        let data = Dataset::render(&spec, &opts).unwrap();
        for method in [Method::Semantics, Method::ScaledSemantics] {
            for mode in [ViewMode::Ideal, ViewMode::Multi] {
                reports.push(AnyReport::Baseline(run_baseline(&data, method, mode, Combine::Mean).unwrap()));
            }
        }
        println!("measured {name}");
    }
    let table = evaluate(&reports).unwrap();
    println!("\n{}", table.to_table());
    println!("(the 3D row uses the exact SDF here, so it shows the pipeline's own error floor)");
}
