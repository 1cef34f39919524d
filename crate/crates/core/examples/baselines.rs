//! The image-space baselines: naive per-facade pixel counting (2D-S) and the
//! scale-weighted variant (2D-SS), from ideal frontal views and from five
//! oblique views per facade.
//!
//! cargo run --release --example baselines -- [facade_image_size]

use bn3d::baseline2d::{run_baseline, Combine, Method, ViewMode};
use bn3d::dataset::{Dataset, FacadeViews, GenerateOptions};
use bn3d::fixtures;

fn main() {
    let size: u32 = std::env::args().nth(1).map_or(384, |s| s.parse().unwrap());
    let opts = GenerateOptions { views: 0, facade_views: FacadeViews::Both, facade_image_size: size, ..GenerateOptions::default() };
    for (name, spec) in [("elongated", fixtures::elongated()), ("unequal_facades", fixtures::unequal_facades())] {
        let data = Dataset::render(&spec, &opts).unwrap();
        println!("{name}: truth wwr {:.4}", data.truth.wwr);
        for method in [Method::Semantics, Method::ScaledSemantics] {
            for mode in [ViewMode::Ideal, ViewMode::Multi] {
                let r = run_baseline(&data, method, mode, Combine::Mean).unwrap();
                println!("  {:<6} {:<6} wwr {:.4}  error {:>6.2}%", method.name(), mode.name(), r.wwr, r.wwr_error_pct);
                for f in &r.rows {
                    let alpha = f.alpha.map_or("-".into(), |a| format!("{a:.3}"));
                    println!("      facade {} alpha {alpha} wwr {:.4} from {} views", f.facade, f.wwr, f.views);
                }
            }
        }
    }
}
