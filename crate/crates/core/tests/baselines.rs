//! Image-space baselines against the closed-form facades they photograph.

use std::collections::BTreeMap;

use bn3d::baseline2d::{
    alpha_weighted_wwr, extract_facade_corners, facade_extent, facade_wwr_pixels, measure_facade, order_corners,
    rectify_labels, run_baseline, wwr_2ds, wwr_2dss, BaselineError, Combine, FacadeMeasurement, FacadeView, Method,
    ViewMode,
};
use bn3d::camera::project;
use bn3d::dataset::{Dataset, FacadeViews, GenerateOptions, View, ViewKind};
use bn3d::fixtures;
use bn3d::scene::BuildingSpec;
use bn3d::{SemanticClass, Vec3};
use proptest::prelude::*;

fn facade_dataset(spec: &BuildingSpec, mode: FacadeViews) -> Dataset {
    let opts = GenerateOptions { views: 0, facade_views: mode, ..GenerateOptions::default() };
    Dataset::render(spec, &opts).unwrap()
}

fn as_view(v: &View) -> FacadeView<'_> {
    FacadeView { image: &v.image, pose: &v.pose, intrinsics: &v.intrinsics, facade: v.facade.unwrap() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// The four world corners of a planar facade (wall part, without roof band).
fn facade_corners(spec: &BuildingSpec, facade: usize, height: f64) -> [Vec3; 4] {
    let n = spec.footprint.len();
    let (a, b) = (spec.footprint[facade], spec.footprint[(facade + 1) % n]);
    [
        Vec3::new(a[0], a[1], height),
        Vec3::new(b[0], b[1], height),
        Vec3::new(b[0], b[1], 0.0),
        Vec3::new(a[0], a[1], 0.0),
    ]
}

#[test]
fn ideal_views_count_pixels_to_the_facade_wwr() {
    let data = facade_dataset(&fixtures::elongated(), FacadeViews::Ideal);
    for v in data.facade_views() {
        let f = v.facade.unwrap();
        let truth = data.truth.facades[f].wwr;
        let px = facade_wwr_pixels(&as_view(v)).unwrap();
        assert!(rel(px, truth) < 0.01, "facade {f}: {px} vs {truth}");
    }
}

#[test]
fn corners_reproject_to_the_facade_dimensions() {
    let spec = fixtures::elongated();
    let data = facade_dataset(&spec, FacadeViews::Both);
    for v in data.facade_views() {
        let f = v.facade.unwrap();
        let truth = &data.truth.facades[f];
        let view = as_view(v);
        let corners = extract_facade_corners(&view).unwrap();
        // Extracted corners against the projection of the true 3D corners.
        let projected = facade_corners(&spec, f, truth.height).map(|p| project(&v.pose, &v.intrinsics, p).unwrap());
        let expected = order_corners(projected);
        for (c, e) in corners.points.iter().zip(&expected) {
            let d = ((c[0] - e[0]).powi(2) + (c[1] - e[1]).powi(2)).sqrt();
            assert!(d <= 2.0, "{:?} facade {f}: corner {c:?} vs {e:?}", v.kind);
        }
        let (length, height, world) = facade_extent(&view, &corners).unwrap();
        assert!(rel(length, truth.length) < 0.01, "{:?} facade {f}: length {length} vs {}", v.kind, truth.length);
        assert!(rel(height, truth.height) < 0.01, "{:?} facade {f}: height {height} vs {}", v.kind, truth.height);
        // Coplanarity: distance of the fourth corner from the plane of the others.
        let n = (world[1] - world[0]).cross(&(world[3] - world[0])).normalize();
        let off = n.dot(&(world[2] - world[0])).abs();
        assert!(off < 0.01 * truth.height, "{:?} facade {f}: off-plane {off}", v.kind);
    }
}

#[test]
fn oblique_rectification_agrees_with_the_frontal_view() {
    let data = facade_dataset(&fixtures::cube_building(), FacadeViews::Both);
    for f in 0..4 {
        let of = |pred: &dyn Fn(ViewKind) -> bool| {
            let v = data.facade_views().find(|v| v.facade == Some(f) && pred(v.kind)).unwrap();
            measure_facade(&as_view(v)).unwrap()
        };
        let frontal = of(&|k| k == ViewKind::Ideal);
        for off in [-30.0, 30.0] {
            let oblique = of(&|k| k == ViewKind::Multi { offset_deg: off });
            assert!(rel(oblique.wwr, frontal.wwr) < 0.02, "facade {f} at {off}°: {} vs {}", oblique.wwr, frontal.wwr);
        }
    }
}

#[test]
fn naive_averaging_is_exact_for_equal_facades_and_biased_otherwise() {
    let cube = facade_dataset(&fixtures::cube_building(), FacadeViews::Ideal);
    let r = run_baseline(&cube, Method::Semantics, ViewMode::Ideal, Combine::Mean).unwrap();
    assert!(r.wwr_error_pct.abs() < 1.0, "cube 2D-S error {}%", r.wwr_error_pct);
    let skew = facade_dataset(&fixtures::unequal_facades(), FacadeViews::Ideal);
    let s = run_baseline(&skew, Method::Semantics, ViewMode::Ideal, Combine::Mean).unwrap();
    let ss = run_baseline(&skew, Method::ScaledSemantics, ViewMode::Ideal, Combine::Mean).unwrap();
    assert!(s.wwr_error_pct.abs() > 10.0, "2D-S error {}%", s.wwr_error_pct);
    assert!(ss.wwr_error_pct.abs() < s.wwr_error_pct.abs());
}

#[test]
fn curved_buildings_are_refused_by_the_scaled_method() {
    let data = facade_dataset(&fixtures::curved(), FacadeViews::Ideal);
    let err = run_baseline(&data, Method::ScaledSemantics, ViewMode::Ideal, Combine::Mean).unwrap_err();
    assert!(matches!(err, BaselineError::CurvedUnsupported { .. }), "{err:?}");
}

#[test]
fn frontal_rectification_is_an_identity_up_to_scale() {
    let (w, h) = (60usize, 40usize);
    let (wall, window) = (SemanticClass::Wall.id(), SemanticClass::Window.id());
    let labels: Vec<u8> = (0..w * h).map(|i| if (i % w / 6 + i / w / 5) % 3 == 0 { window } else { wall }).collect();
    let mask = vec![true; w * h];
    let count = |l: &[u8], m: &[bool]| {
        let win = l.iter().zip(m).filter(|(&x, &k)| k && x == window).count() as f64;
        let wal = l.iter().zip(m).filter(|(&x, &k)| k && x == wall).count() as f64;
        win / wal
    };
    let corners = [[0.0, 0.0], [w as f64, 0.0], [w as f64, h as f64], [0.0, h as f64]];
    let r = rectify_labels(&labels, &mask, w, &corners, w as f64 / h as f64).unwrap();
    assert_eq!((r.width, r.height), (w, h));
    assert_eq!(r.labels, labels);
    assert!(rel(count(&r.labels, &r.mask), count(&labels, &mask)) < 0.005);
}

fn measurement(facade: usize, alpha: f64, wwr: f64) -> FacadeMeasurement {
    FacadeMeasurement { facade, length: alpha, height: 1.0, alpha, wwr, pixel_scale: 0.01, split: false }
}

proptest! {
    #[test]
    fn equal_alphas_reduce_to_the_naive_average(
        alpha in 0.05..20.0f64,
        wwrs in prop::collection::vec(prop::collection::vec(0.0..1.5f64, 1..6), 1..8),
    ) {
        let naive: BTreeMap<usize, Vec<f64>> = wwrs.iter().cloned().enumerate().collect();
        let scaled: BTreeMap<usize, Vec<FacadeMeasurement>> = wwrs
            .iter()
            .enumerate()
            .map(|(f, v)| (f, v.iter().map(|&w| measurement(f, alpha, w)).collect()))
            .collect();
        for combine in [Combine::Mean, Combine::Median] {
            prop_assert_eq!(wwr_2dss(&scaled, combine).unwrap(), wwr_2ds(&naive, combine).unwrap());
        }
    }

    #[test]
    fn alpha_weighting_ignores_a_common_scale(
        pairs in prop::collection::vec((0.05..20.0f64, 0.0..1.5f64), 1..10),
        e in -6i32..7,
    ) {
        let k = 2f64.powi(e);
        let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(a, w)| (a * k, w)).collect();
        prop_assert_eq!(alpha_weighted_wwr(&pairs).unwrap(), alpha_weighted_wwr(&scaled).unwrap());
        let k = 1.0 + e as f64 / 7.3;
        let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(a, w)| (a * k, w)).collect();
        let (x, y) = (alpha_weighted_wwr(&pairs).unwrap(), alpha_weighted_wwr(&scaled).unwrap());
        prop_assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0));
    }

    #[test]
    fn rectification_only_copies_source_labels(
        (w, h, labels) in (4usize..20, 4usize..20).prop_flat_map(|(w, h)| (Just(w), Just(h), prop::collection::vec(0u8..3, w * h))),
        jitter in prop::collection::vec(-0.2..0.2f64, 8),
        alpha in 0.3..3.0f64,
    ) {
        let (wf, hf) = (w as f64, h as f64);
        let q = [
            [0.2 * wf + jitter[0] * wf, 0.2 * hf + jitter[1] * hf],
            [0.8 * wf + jitter[2] * wf, 0.2 * hf + jitter[3] * hf],
            [0.8 * wf + jitter[4] * wf, 0.8 * hf + jitter[5] * hf],
            [0.2 * wf + jitter[6] * wf, 0.8 * hf + jitter[7] * hf],
        ];
        let mask = vec![true; w * h];
        let r = rectify_labels(&labels, &mask, w, &q, alpha).unwrap();
        let present: std::collections::BTreeSet<u8> = labels.iter().copied().collect();
        prop_assert!(r.labels.iter().all(|l| present.contains(l)));
        prop_assert!((r.width as f64 - alpha * r.height as f64).abs() <= 0.5 + 1e-9);
    }
}
