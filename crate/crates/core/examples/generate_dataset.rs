//! Renders a multi-modal dataset (colour, semantics, depth, poses, ground
//! truth) for one procedural building and writes it with a hashed manifest.
//!
//! cargo run --release --example generate_dataset -- [fixture] [out_dir] [views]

use std::path::PathBuf;

use bn3d::dataset::{self, FacadeViews, GenerateOptions};
use bn3d::fixtures;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map_or("desk", String::as_str);
    let out = PathBuf::from(args.get(2).map_or("target/examples/dataset", String::as_str));
    let views = args.get(3).map_or(20, |v| v.parse().expect("views must be an integer"));
    let spec = fixtures::by_name(name).unwrap_or_else(|| panic!("unknown fixture {name}; try one of {:?}", fixtures::NAMES));

    let opts = GenerateOptions { views, facade_views: FacadeViews::Ideal, facade_image_size: 256, ..GenerateOptions::default() };
    let manifest = dataset::generate(&spec, &out, &opts).expect("dataset generation");
    let (_, data) = dataset::load(&out.join(dataset::MANIFEST_FILE)).expect("dataset reloads");

    println!("wrote {} views of '{name}' to {}", manifest.views.len(), out.display());
    println!("content hash {}", manifest.content_hash);
    let t = &data.truth;
    println!("ground truth: wwr {:.4}, window {:.2} m², wall {:.2} m², footprint {:.2} m²", t.wwr, t.window_area, t.wall_area, t.footprint_area);
    for (i, f) in t.facades.iter().enumerate() {
        println!("  facade {i}: {:.2} m × {:.2} m, wwr {:.4}", f.length, f.height, f.wwr);
    }
}
