//! Named building specs used by the examples, the CLI defaults and the tests.

use crate::scene::{ArcEdge, BalconySpec, BuildingKind, BuildingSpec, DoorSpec, WindowGrid};

fn rect(kind: BuildingKind, x0: f64, y0: f64, x1: f64, y1: f64, height: f64) -> BuildingSpec {
    BuildingSpec {
        kind,
        footprint: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        arcs: vec![],
        height,
        floors: 1,
        roof_thickness: 0.0,
        windows: vec![],
        doors: vec![],
        balconies: vec![],
    }
}

fn all_facades(n: usize, grid: WindowGrid) -> Vec<WindowGrid> {
    (0..n).map(|facade| WindowGrid { facade, ..grid }).collect()
}

/// 1 m cube standing on the ground, no openings.
pub fn unit_cube() -> BuildingSpec {
    rect(BuildingKind::Skyscraper, 0.0, 0.0, 1.0, 1.0, 1.0)
}

/// Unit cube with a single 0.5 m × 0.5 m window on facade 0.
pub fn unit_cube_one_window() -> BuildingSpec {
    BuildingSpec {
        windows: vec![WindowGrid { facade: 0, rows: 1, columns: 1, width: 0.5, height: 0.5, sill: 0.25 }],
        ..unit_cube()
    }
}

/// Small skyscraper centred on the origin, sized for desk-scale training:
/// 0.8 m × 0.8 m × 1.3 m with a 3 × 2 window grid on each facade.
pub fn desk_skyscraper() -> BuildingSpec {
    BuildingSpec {
        floors: 3,
        roof_thickness: 0.1,
        windows: all_facades(
            4,
            WindowGrid { facade: 0, rows: 3, columns: 2, width: 0.22, height: 0.2, sill: 0.1 },
        ),
        ..rect(BuildingKind::Skyscraper, -0.4, -0.4, 0.4, 0.4, 1.3)
    }
}

/// Cube-like building whose four facades are identical.
pub fn cube_building() -> BuildingSpec {
    BuildingSpec {
        floors: 3,
        roof_thickness: 0.3,
        windows: all_facades(
            4,
            WindowGrid { facade: 0, rows: 3, columns: 3, width: 1.2, height: 1.4, sill: 0.9 },
        ),
        ..rect(BuildingKind::Skyscraper, 0.0, 0.0, 9.0, 9.0, 9.3)
    }
}

/// Elongated box (24 m × 8 m) whose four facades share one WWR, so every
/// facade-averaging scheme agrees with the area-weighted truth.
pub fn elongated() -> BuildingSpec {
    let long = WindowGrid { facade: 0, rows: 3, columns: 8, width: 1.6, height: 1.6, sill: 0.8 };
    let short = WindowGrid { facade: 1, rows: 3, columns: 4, width: 16.0 / 15.0, height: 1.6, sill: 0.8 };
    BuildingSpec {
        floors: 3,
        roof_thickness: 0.3,
        windows: vec![long, short, WindowGrid { facade: 2, ..long }, WindowGrid { facade: 3, ..short }],
        ..rect(BuildingKind::Skyscraper, 0.0, 0.0, 24.0, 8.0, 9.3)
    }
}

/// Elongated box whose long facades are glazier than the short ones, so
/// unweighted per-facade averaging is biased.
pub fn unequal_facades() -> BuildingSpec {
    let long = WindowGrid { facade: 0, rows: 3, columns: 8, width: 1.6, height: 1.6, sill: 0.8 };
    let short = WindowGrid { facade: 1, rows: 3, columns: 2, width: 1.0, height: 1.2, sill: 1.0 };
    BuildingSpec {
        windows: vec![long, short, WindowGrid { facade: 2, ..long }, WindowGrid { facade: 3, ..short }],
        ..elongated()
    }
}

/// Box whose closed-form envelope matches the first building of the
/// published realistic set: 62.18 m² of windows and 462.26 m² of wall.
pub fn building_one_like() -> BuildingSpec {
    // Perimeter × height = 524.44 m² with height 10 m and one side 11 m.
    let (l, w, h) = (15.222, 11.0, 10.0);
    // 42 windows of 1.2 m × (62.18 / 42 / 1.2) m.
    let win_h = 62.18 / 42.0 / 1.2;
    let grid = |facade, columns| WindowGrid { facade, rows: 3, columns, width: 1.2, height: win_h, sill: 1.0 };
    BuildingSpec {
        floors: 3,
        windows: vec![grid(0, 4), grid(1, 3), grid(2, 4), grid(3, 3)],
        ..rect(BuildingKind::Skyscraper, 0.0, 0.0, l, w, h)
    }
}

/// L-shaped block with windows on every facade and a door.
pub fn l_shaped() -> BuildingSpec {
    let footprint = vec![[0.0, 0.0], [20.0, 0.0], [20.0, 8.0], [9.0, 8.0], [9.0, 16.0], [0.0, 16.0]];
    let lengths: [f64; 6] = [20.0, 8.0, 11.0, 8.0, 9.0, 16.0];
    let windows = lengths
        .iter()
        .enumerate()
        .map(|(facade, &len)| WindowGrid {
            facade,
            rows: 4,
            columns: (len / 3.0).round() as u32,
            width: 1.3,
            height: 1.5,
            sill: 0.9,
        })
        .collect();
    BuildingSpec {
        kind: BuildingKind::LShaped,
        footprint,
        arcs: vec![],
        height: 12.4,
        floors: 4,
        roof_thickness: 0.4,
        windows,
        doors: vec![DoorSpec { facade: 0, center: 20.0 / 7.0, width: 1.0, height: 2.2 }],
        balconies: vec![],
    }
}

/// Rectangle with a semicircular bay on its east side.
pub fn curved() -> BuildingSpec {
    let arc_len = std::f64::consts::PI * 6.0;
    let grid = |facade, columns| WindowGrid { facade, rows: 5, columns, width: 1.2, height: 1.4, sill: 0.9 };
    BuildingSpec {
        kind: BuildingKind::Curved,
        footprint: vec![[0.0, 0.0], [16.0, 0.0], [16.0, 12.0], [0.0, 12.0]],
        arcs: vec![ArcEdge { edge: 1, sagitta: 6.0 }],
        height: 15.5,
        floors: 5,
        roof_thickness: 0.5,
        windows: vec![grid(0, 5), grid(1, (arc_len / 3.0).round() as u32), grid(2, 5), grid(3, 4)],
        doors: vec![],
        balconies: vec![],
    }
}

/// Box with balcony slabs between the window columns of its front facade.
pub fn balcony() -> BuildingSpec {
    let grid = |facade, columns| WindowGrid { facade, rows: 4, columns, width: 1.4, height: 1.5, sill: 0.9 };
    let balconies = (1..4)
        .flat_map(|floor| {
            [4.0, 8.0].map(|center| BalconySpec {
                facade: 0,
                center,
                width: 1.8,
                depth: 1.2,
                bottom: floor as f64 * 3.0 + 0.05,
                thickness: 0.3,
            })
        })
        .collect();
    BuildingSpec {
        kind: BuildingKind::Balcony,
        footprint: vec![[0.0, 0.0], [12.0, 0.0], [12.0, 10.0], [0.0, 10.0]],
        arcs: vec![],
        height: 12.4,
        floors: 4,
        roof_thickness: 0.4,
        windows: vec![grid(0, 3), grid(1, 3), grid(2, 3), grid(3, 3)],
        doors: vec![],
        balconies,
    }
}

/// One representative of each building kind, in a fixed order.
pub fn all_kinds() -> Vec<(&'static str, BuildingSpec)> {
    vec![
        ("skyscraper", elongated()),
        ("lshaped", l_shaped()),
        ("curved", curved()),
        ("balcony", balcony()),
    ]
}

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 10] = [
    "unit_cube",
    "unit_cube_one_window",
    "desk",
    "cube",
    "elongated",
    "unequal_facades",
    "b1",
    "lshaped",
    "curved",
    "balcony",
];

pub fn by_name(name: &str) -> Option<BuildingSpec> {
    Some(match name {
        "unit_cube" => unit_cube(),
        "unit_cube_one_window" => unit_cube_one_window(),
        "desk" => desk_skyscraper(),
        "cube" => cube_building(),
        "elongated" | "skyscraper" => elongated(),
        "unequal_facades" => unequal_facades(),
        "b1" => building_one_like(),
        "lshaped" => l_shaped(),
        "curved" => curved(),
        "balcony" => balcony(),
        _ => return None,
    })
}
