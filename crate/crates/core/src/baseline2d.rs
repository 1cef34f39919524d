//! Image-space WWR baselines.
//!
//! * 2D-S counts window and wall pixels per facade view and averages the
//!   per-facade ratios with equal weight.
//! * 2D-SS finds the facade quadrilateral in each view, reprojects its corners
//!   with depth to get the facade's length-to-height ratio α, rectifies the
//!   facade with a homography and averages per-facade ratios weighted by α.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{pixel_ray_unchecked, CameraPose, Intrinsics};
use crate::dataset::{Dataset, ViewKind};
use crate::render::MultiModalImage;
use crate::scene::{GroundTruth, SemanticClass};
use crate::{Mat3, Vec3};

/// Smallest facade mask (bounding box side, pixels) accepted for corner extraction.
pub const MIN_MASK_SIDE: usize = 4;

/// Upper bound on the rectified raster height.
pub const MAX_RECTIFIED_HEIGHT: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("facade {facade}: no wall pixels")]
    NoWallPixels { facade: usize },
    #[error("facade {facade}: mask too small ({width}x{height} px)")]
    MaskTooSmall { facade: usize, width: usize, height: usize },
    #[error("no valid depth at pixel ({u}, {v})")]
    InvalidDepth { u: f64, v: f64 },
    #[error("facade quadrilateral is degenerate")]
    DegenerateQuad,
    #[error("2D-SS cannot measure curved facades {facades:?}")]
    CurvedUnsupported { facades: Vec<usize> },
    #[error("facades {facades:?} could not be measured")]
    Unmeasurable { facades: Vec<usize> },
    #[error("no facades to aggregate")]
    NoFacades,
}

/// One image of a known facade.
#[derive(Clone, Copy, Debug)]
pub struct FacadeView<'a> {
    pub image: &'a MultiModalImage,
    pub pose: &'a CameraPose,
    pub intrinsics: &'a Intrinsics,
    pub facade: usize,
}

const WALL: u8 = SemanticClass::Wall as u8;
const WINDOW: u8 = SemanticClass::Window as u8;

/// Pixels showing the wall or windows of the view's facade.
pub fn facade_mask(view: &FacadeView) -> Vec<bool> {
    let id = view.facade as u16 + 1;
    let labels = view.image.label_ids();
    labels
        .iter()
        .zip(&view.image.facade)
        .map(|(&l, &f)| f == id && (l == WALL || l == WINDOW))
        .collect()
}

/// `#window / #wall` over the masked pixels.
pub fn wwr_from_labels(labels: &[u8], mask: &[bool], facade: usize) -> Result<f64, BaselineError> {
    let (mut win, mut wall) = (0usize, 0usize);
    for (&l, &m) in labels.iter().zip(mask) {
        if m {
            match l {
                WINDOW => win += 1,
                WALL => wall += 1,
                _ => {}
            }
        }
    }
    if wall == 0 {
        return Err(BaselineError::NoWallPixels { facade });
    }
    Ok(win as f64 / wall as f64)
}

/// Pixel-count WWR of one facade in one view.
pub fn facade_wwr_pixels(view: &FacadeView) -> Result<f64, BaselineError> {
    wwr_from_labels(&view.image.label_ids(), &facade_mask(view), view.facade)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Combine {
    Mean,
    Median,
}

impl Combine {
    pub fn apply(self, values: &[f64]) -> f64 {
        match self {
            // Shifted by the first value so identical inputs come back exactly.
            Combine::Mean => values[0] + values.iter().map(|v| v - values[0]).sum::<f64>() / values.len() as f64,
            Combine::Median => {
                let mut v = values.to_vec();
                v.sort_by(f64::total_cmp);
                let n = v.len();
                if n % 2 == 1 {
                    v[n / 2]
                } else {
                    0.5 * (v[n / 2 - 1] + v[n / 2])
                }
            }
        }
    }
}

/// Unweighted mean over facades of each facade's combined per-view WWR.
pub fn wwr_2ds(per_facade: &BTreeMap<usize, Vec<f64>>, combine: Combine) -> Result<f64, BaselineError> {
    let values: Vec<f64> = per_facade.values().filter(|v| !v.is_empty()).map(|v| combine.apply(v)).collect();
    if values.is_empty() {
        return Err(BaselineError::NoFacades);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// `Σ wwrᵢ·αᵢ / Σ αᵢ` over `(α, wwr)` pairs. Weights are taken relative to
/// the first α, so equal α reproduce the unweighted mean bit for bit.
pub fn alpha_weighted_wwr(facades: &[(f64, f64)]) -> Result<f64, BaselineError> {
    let Some(&(a0, _)) = facades.first() else {
        return Err(BaselineError::NoFacades);
    };
    let num: f64 = facades.iter().map(|(a, w)| (a / a0) * w).sum();
    let den: f64 = facades.iter().map(|(a, _)| a / a0).sum();
    Ok(num / den)
}

// ---------------------------------------------------------------------------
// Corners
// ---------------------------------------------------------------------------

/// Largest 4-connected component of a mask and whether others were dropped.
pub fn largest_component(mask: &[bool], width: usize) -> (Vec<bool>, bool) {
    let mut comp = vec![u32::MAX; mask.len()];
    let mut sizes = Vec::new();
    let height = mask.len() / width;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || comp[start] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        let mut size = 0usize;
        comp[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            size += 1;
            let (x, y) = (p % width, p / width);
            let mut visit = |q: usize| {
                if mask[q] && comp[q] == u32::MAX {
                    comp[q] = id;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < width {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - width);
            }
            if y + 1 < height {
                visit(p + width);
            }
        }
        sizes.push(size);
    }
    // Largest first; ties go to the first component in scan order.
    let Some(best) = (0..sizes.len()).max_by_key(|&i| (sizes[i], std::cmp::Reverse(i))) else {
        return (vec![false; mask.len()], false);
    };
    (comp.iter().map(|&c| c == best as u32).collect(), sizes.len() > 1)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull (monotone chain) without collinear points, in order of
/// increasing angle in a y-up frame.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn tri_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * cross(a, b, c).abs()
}

/// Indices of the four hull vertices spanning the largest quadrilateral.
pub fn max_area_quad(hull: &[[f64; 2]]) -> Option<[usize; 4]> {
    let h = hull.len();
    if h < 4 {
        return None;
    }
    let mut best = (0.0, [0, 1, 2, 3]);
    for i in 0..h {
        for k in i + 2..h {
            if i == 0 && k == h - 1 {
                continue;
            }
            let j = (i + 1..k).max_by(|&a, &b| tri_area(hull[i], hull[a], hull[k]).total_cmp(&tri_area(hull[i], hull[b], hull[k])))?;
            let l = (k + 1..h + i)
                .map(|x| x % h)
                .max_by(|&a, &b| tri_area(hull[i], hull[k], hull[a]).total_cmp(&tri_area(hull[i], hull[k], hull[b])))?;
            let area = tri_area(hull[i], hull[j], hull[k]) + tri_area(hull[i], hull[k], hull[l]);
            if area > best.0 {
                best = (area, [i, j, k, l]);
            }
        }
    }
    (best.0 > 0.0).then_some(best.1)
}

/// Facade corners in pixel coordinates, ordered top-left, top-right,
/// bottom-right, bottom-left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corners {
    pub points: [[f64; 2]; 4],
    /// The mask had several components and only the largest was used.
    pub split: bool,
}

/// Orders four image points (y down) as TL, TR, BR, BL.
pub fn order_corners(mut q: [[f64; 2]; 4]) -> [[f64; 2]; 4] {
    let c = [q.iter().map(|p| p[0]).sum::<f64>() / 4.0, q.iter().map(|p| p[1]).sum::<f64>() / 4.0];
    q.sort_by(|a, b| (a[1] - c[1]).atan2(a[0] - c[0]).total_cmp(&(b[1] - c[1]).atan2(b[0] - c[0])));
    let tl = (0..4).min_by(|&a, &b| (q[a][0] + q[a][1]).total_cmp(&(q[b][0] + q[b][1]))).unwrap();
    [q[tl], q[(tl + 1) % 4], q[(tl + 2) % 4], q[(tl + 3) % 4]]
}

/// Corners of the maximal-area quadrilateral inscribed in the convex hull of
/// the facade mask's largest component, taken over pixel squares so the quad
/// reaches the facade's outer edge.
pub fn extract_facade_corners(view: &FacadeView) -> Result<Corners, BaselineError> {
    let w = view.image.width as usize;
    let (mask, split) = largest_component(&facade_mask(view), w);
    // Only the outermost pixels of each row can touch the hull.
    let mut pts: Vec<[f64; 2]> = Vec::new();
    let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0, usize::MAX, 0);
    for (y, row) in mask.chunks_exact(w).enumerate() {
        let (Some(l), Some(r)) = (row.iter().position(|&m| m), row.iter().rposition(|&m| m)) else { continue };
        let (y, l, r) = (y as f64, l as f64, r as f64 + 1.0);
        pts.extend([[l, y], [l, y + 1.0], [r, y], [r, y + 1.0]]);
        x0 = x0.min(l as usize);
        x1 = x1.max(r as usize);
        y0 = y0.min(y as usize);
        y1 = y1.max(y as usize + 1);
    }
    let (bw, bh) = (x1.saturating_sub(x0), y1.saturating_sub(y0));
    if bw < MIN_MASK_SIDE || bh < MIN_MASK_SIDE {
        return Err(BaselineError::MaskTooSmall { facade: view.facade, width: bw, height: bh });
    }
    let hull = convex_hull(&pts);
    let idx = max_area_quad(&hull).ok_or(BaselineError::DegenerateQuad)?;
    Ok(Corners { points: order_corners(idx.map(|i| hull[i])), split })
}

/// World point seen at `pixel` at along-ray distance `depth`.
pub fn reproject_corner(pixel: [f64; 2], depth: f64, pose: &CameraPose, k: &Intrinsics) -> Result<Vec3, BaselineError> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(BaselineError::InvalidDepth { u: pixel[0], v: pixel[1] });
    }
    let ray = pixel_ray_unchecked(pose, k, pixel);
    Ok(ray.at(depth))
}

/// Half-width of the pixel window searched around a corner for depth.
const CORNER_WINDOW: i64 = 3;

/// World position of a corner that lies on a pixel boundary. A plane is
/// fitted to the reprojected facade pixels around the corner and intersected
/// with the corner's ray; if that fails the nearest facade depth is used.
fn locate_corner(view: &FacadeView, mask: &[bool], corner: [f64; 2]) -> Result<Vec3, BaselineError> {
    let (w, h) = (view.image.width as i64, view.image.height as i64);
    let (cx, cy) = (corner[0].round() as i64, corner[1].round() as i64);
    let mut pts: Vec<(f64, Vec3)> = Vec::new();
    for y in (cy - CORNER_WINDOW).max(0)..(cy + CORNER_WINDOW).min(h) {
        for x in (cx - CORNER_WINDOW).max(0)..(cx + CORNER_WINDOW).min(w) {
            let i = (y * w + x) as usize;
            let d = view.image.depth[i] as f64;
            if !mask[i] || !(d.is_finite() && d > 0.0) {
                continue;
            }
            let p = [x as f64 + 0.5, y as f64 + 0.5];
            let dist = (p[0] - corner[0]).hypot(p[1] - corner[1]);
            pts.push((dist, reproject_corner(p, d, view.pose, view.intrinsics)?));
        }
    }
    if pts.is_empty() {
        return Err(BaselineError::InvalidDepth { u: corner[0], v: corner[1] });
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ray = pixel_ray_unchecked(view.pose, view.intrinsics, corner);
    if pts.len() >= 3 {
        let c = pts.iter().map(|p| p.1).sum::<Vec3>() / pts.len() as f64;
        let cov = pts.iter().fold(Mat3::zeros(), |m, p| m + (p.1 - c) * (p.1 - c).transpose());
        let eig = cov.symmetric_eigen();
        let k = eig.eigenvalues.imin();
        let n = eig.eigenvectors.column(k).into_owned();
        // Require a genuine 2D spread of points before trusting the normal.
        let mut sorted = eig.eigenvalues.as_slice().to_vec();
        sorted.sort_by(f64::total_cmp);
        let denom = n.dot(&ray.direction);
        if sorted[1] > 1e-6 * sorted[2] && denom.abs() > 1e-6 {
            let t = n.dot(&(c - ray.origin)) / denom;
            if t.is_finite() && t > 0.0 {
                return Ok(ray.at(t));
            }
        }
    }
    let nearest = pts[0].1;
    Ok(ray.at((nearest - ray.origin).norm()))
}

/// Facade length and height (metres) from the reprojected corners.
pub fn facade_extent(view: &FacadeView, corners: &Corners) -> Result<(f64, f64, [Vec3; 4]), BaselineError> {
    let mask = facade_mask(view);
    let mut world = [Vec3::zeros(); 4];
    for (w, p) in world.iter_mut().zip(corners.points) {
        *w = locate_corner(view, &mask, p)?;
    }
    let [tl, tr, br, bl] = world;
    let length = 0.5 * ((tr - tl).norm() + (br - bl).norm());
    let height = 0.5 * ((bl - tl).norm() + (br - tr).norm());
    if !(length > 0.0 && height > 0.0) {
        return Err(BaselineError::DegenerateQuad);
    }
    Ok((length, height, world))
}

// ---------------------------------------------------------------------------
// Rectification
// ---------------------------------------------------------------------------

/// Homography taking each `src[i]` to `dst[i]`.
pub fn homography(src: [[f64; 2]; 4], dst: [[f64; 2]; 4]) -> Result<Mat3, BaselineError> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let ([x, y], [u, v]) = (src[i], dst[i]);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b).ok_or(BaselineError::DegenerateQuad)?;
    if h.iter().any(|v| !v.is_finite()) {
        return Err(BaselineError::DegenerateQuad);
    }
    Ok(Mat3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0))
}

fn quad_area(q: &[[f64; 2]; 4]) -> f64 {
    0.5 * (0..4).map(|i| q[i][0] * q[(i + 1) % 4][1] - q[(i + 1) % 4][0] * q[i][1]).sum::<f64>()
}

/// Front-facing raster of a facade.
#[derive(Clone, Debug, PartialEq)]
pub struct Rectified {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
    /// Whether each rectified pixel samples the facade itself.
    pub mask: Vec<bool>,
}

impl Rectified {
    pub fn wwr(&self, facade: usize) -> Result<f64, BaselineError> {
        wwr_from_labels(&self.labels, &self.mask, facade)
    }
}

/// Warps the quadrilateral `corners` of the source labels onto a `W × H`
/// raster with `W / H = alpha`, by nearest-neighbour lookup. `H` follows the
/// mean pixel height of the quadrilateral's sides.
pub fn rectify_labels(
    labels: &[u8],
    mask: &[bool],
    width: usize,
    corners: &[[f64; 2]; 4],
    alpha: f64,
) -> Result<Rectified, BaselineError> {
    if !(quad_area(corners).abs() > 1e-9) || !(alpha > 0.0 && alpha.is_finite()) {
        return Err(BaselineError::DegenerateQuad);
    }
    let height_src = labels.len() / width;
    let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let [tl, tr, br, bl] = *corners;
    let h = (0.5 * (d(tl, bl) + d(tr, br))).round().clamp(1.0, MAX_RECTIFIED_HEIGHT as f64) as usize;
    let w = ((alpha * h as f64).round() as usize).max(1);
    let (wf, hf) = (w as f64, h as f64);
    let hm = homography([[0.0, 0.0], [wf, 0.0], [wf, hf], [0.0, hf]], *corners)?;
    let mut out = Rectified { width: w, height: h, labels: vec![0; w * h], mask: vec![false; w * h] };
    for y in 0..h {
        for x in 0..w {
            let p = hm * Vec3::new(x as f64 + 0.5, y as f64 + 0.5, 1.0);
            let (u, v) = (p.x / p.z, p.y / p.z);
            let (ui, vi) = (u.floor().clamp(0.0, width as f64 - 1.0) as usize, v.floor().clamp(0.0, height_src as f64 - 1.0) as usize);
            let src = vi * width + ui;
            out.labels[y * w + x] = labels[src];
            out.mask[y * w + x] = mask[src];
        }
    }
    Ok(out)
}

pub fn rectify_facade(view: &FacadeView, corners: &Corners, alpha: f64) -> Result<Rectified, BaselineError> {
    rectify_labels(&view.image.label_ids(), &facade_mask(view), view.image.width as usize, &corners.points, alpha)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacadeMeasurement {
    pub facade: usize,
    pub length: f64,
    pub height: f64,
    pub alpha: f64,
    pub wwr: f64,
    /// Metres per rectified pixel along the facade height.
    pub pixel_scale: f64,
    pub split: bool,
}

/// Full 2D-SS measurement of one view.
pub fn measure_facade(view: &FacadeView) -> Result<FacadeMeasurement, BaselineError> {
    let corners = extract_facade_corners(view)?;
    let (length, height, _) = facade_extent(view, &corners)?;
    let alpha = length / height;
    let rect = rectify_facade(view, &corners, alpha)?;
    Ok(FacadeMeasurement {
        facade: view.facade,
        length,
        height,
        alpha,
        wwr: rect.wwr(view.facade)?,
        pixel_scale: height / rect.height as f64,
        split: corners.split,
    })
}

/// Eq. 12 over views grouped by facade: per facade, α and WWR are combined
/// over its views first.
pub fn wwr_2dss(per_facade: &BTreeMap<usize, Vec<FacadeMeasurement>>, combine: Combine) -> Result<f64, BaselineError> {
    let missing: Vec<usize> = per_facade.iter().filter(|(_, v)| v.is_empty()).map(|(f, _)| *f).collect();
    if !missing.is_empty() {
        return Err(BaselineError::Unmeasurable { facades: missing });
    }
    let pairs: Vec<(f64, f64)> = per_facade
        .values()
        .map(|v| {
            let a: Vec<f64> = v.iter().map(|m| m.alpha).collect();
            let w: Vec<f64> = v.iter().map(|m| m.wwr).collect();
            (combine.apply(&a), combine.apply(&w))
        })
        .collect();
    alpha_weighted_wwr(&pairs)
}

// ---------------------------------------------------------------------------
// Runs over a dataset
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Method {
    #[value(name = "2d-s")]
    #[serde(rename = "2D-S")]
    Semantics,
    #[value(name = "2d-ss")]
    #[serde(rename = "2D-SS")]
    ScaledSemantics,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Semantics => "2D-S",
            Method::ScaledSemantics => "2D-SS",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum ViewMode {
    Ideal,
    Multi,
}

impl ViewMode {
    pub fn name(self) -> &'static str {
        match self {
            ViewMode::Ideal => "ideal",
            ViewMode::Multi => "multi",
        }
    }

    fn accepts(self, kind: ViewKind) -> bool {
        matches!((self, kind), (ViewMode::Ideal, ViewKind::Ideal) | (ViewMode::Multi, ViewKind::Multi { .. }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacadeRow {
    pub facade: usize,
    /// Combined α (2D-SS only).
    pub alpha: Option<f64>,
    pub wwr: f64,
    pub views: usize,
    /// Views that could not be measured.
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub method: Method,
    pub mode: ViewMode,
    pub combine: Combine,
    pub rows: Vec<FacadeRow>,
    pub wwr: f64,
    pub truth_wwr: f64,
    #[serde(with = "crate::characteristics::nan_as_null")]
    pub wwr_error_pct: f64,
    /// Views whose facade mask was split by an occluder.
    pub split_views: usize,
}

impl BaselineReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,facade,alpha,wwr,views,skipped\n");
        for r in &self.rows {
            let alpha = r.alpha.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(s, "facade,{},{alpha},{},{},{}", r.facade, r.wwr, r.views, r.skipped);
        }
        let _ = writeln!(s, "\nsummary,method,mode,combine,wwr,truth_wwr,wwr_error_pct");
        let _ = writeln!(
            s,
            "summary,{},{},{:?},{},{},{}",
            self.method.name(),
            self.mode.name(),
            self.combine,
            self.wwr,
            self.truth_wwr,
            self.wwr_error_pct
        );
        s
    }
}

/// Runs one baseline on the facade views of a dataset.
pub fn run_baseline(data: &Dataset, method: Method, mode: ViewMode, combine: Combine) -> Result<BaselineReport, BaselineError> {
    run_on_views(
        &data.truth,
        data.views.iter().filter(|v| mode.accepts(v.kind)).filter_map(|v| {
            v.facade.map(|facade| FacadeView { image: &v.image, pose: &v.pose, intrinsics: &v.intrinsics, facade })
        }),
        method,
        mode,
        combine,
    )
}

pub fn run_on_views<'a>(
    truth: &GroundTruth,
    views: impl Iterator<Item = FacadeView<'a>>,
    method: Method,
    mode: ViewMode,
    combine: Combine,
) -> Result<BaselineReport, BaselineError> {
    if method == Method::ScaledSemantics {
        let curved: Vec<usize> = truth.facades.iter().filter(|f| f.curved).map(|f| f.facade).collect();
        if !curved.is_empty() {
            return Err(BaselineError::CurvedUnsupported { facades: curved });
        }
    }
    let mut ratios: BTreeMap<usize, Vec<f64>> = truth.facades.iter().map(|f| (f.facade, vec![])).collect();
    let mut measured: BTreeMap<usize, Vec<FacadeMeasurement>> = truth.facades.iter().map(|f| (f.facade, vec![])).collect();
    let mut skipped: BTreeMap<usize, usize> = BTreeMap::new();
    let mut split_views = 0;
    for v in views {
        let result = match method {
            Method::Semantics => facade_wwr_pixels(&v).map(|w| ratios.entry(v.facade).or_default().push(w)),
            Method::ScaledSemantics => measure_facade(&v).map(|m| {
                split_views += m.split as usize;
                measured.entry(v.facade).or_default().push(m);
            }),
        };
        if result.is_err() {
            *skipped.entry(v.facade).or_default() += 1;
        }
    }
    let (wwr, rows) = match method {
        Method::Semantics => {
            let missing: Vec<usize> = ratios.iter().filter(|(_, v)| v.is_empty()).map(|(f, _)| *f).collect();
            if !missing.is_empty() {
                return Err(BaselineError::Unmeasurable { facades: missing });
            }
            let rows = ratios
                .iter()
                .map(|(&facade, v)| FacadeRow {
                    facade,
                    alpha: None,
                    wwr: combine.apply(v),
                    views: v.len(),
                    skipped: skipped.get(&facade).copied().unwrap_or(0),
                })
                .collect();
            (wwr_2ds(&ratios, combine)?, rows)
        }
        Method::ScaledSemantics => {
            let wwr = wwr_2dss(&measured, combine)?;
            let rows = measured
                .iter()
                .map(|(&facade, v)| FacadeRow {
                    facade,
                    alpha: Some(combine.apply(&v.iter().map(|m| m.alpha).collect::<Vec<_>>())),
                    wwr: combine.apply(&v.iter().map(|m| m.wwr).collect::<Vec<_>>()),
                    views: v.len(),
                    skipped: skipped.get(&facade).copied().unwrap_or(0),
                })
                .collect();
            (wwr, rows)
        }
    };
    Ok(BaselineReport {
        method,
        mode,
        combine,
        rows,
        wwr,
        truth_wwr: truth.wwr,
        wwr_error_pct: crate::characteristics::percent_error(wwr, truth.wwr),
        split_views,
    })
}
