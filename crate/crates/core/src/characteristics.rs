//! Envelope characteristics from a field: marching-cubes semantic mesh,
//! window-to-wall ratio with fractional triangle weighting, ground-level
//! footprint contour and footprint IoU.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mc_tables::{EDGE_TABLE, TRI_TABLE};
use crate::render::Field;
use crate::scene::{GroundTruth, SemanticClass};
use crate::Vec3;

/// Triangles below this area (m²) are ignored by the area sums.
pub const EPS_TRI: f64 = 1e-12;

/// Resolution of the IoU raster along each axis.
pub const IOU_RASTER: usize = 1024;

#[derive(Debug, Error)]
pub enum CharacteristicsError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("mesh has no wall area, window-to-wall ratio is undefined")]
    ZeroWallArea,
    #[error("mesh vertices carry no semantic labels")]
    LabelsUnset,
    #[error("isosurface is empty")]
    EmptySurface,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Axis-aligned sampling lattice with `resolution[a]` points along axis `a`
/// (so `resolution[a] - 1` cells).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub resolution: [usize; 3],
}

impl GridSpec {
    pub fn new(min: [f64; 3], max: [f64; 3], resolution: [usize; 3]) -> Result<Self, CharacteristicsError> {
        let g = GridSpec { min, max, resolution };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), CharacteristicsError> {
        for a in 0..3 {
            if self.resolution[a] < 2 {
                return Err(CharacteristicsError::InvalidGrid(format!(
                    "resolution {} on axis {a} (need at least 2)",
                    self.resolution[a]
                )));
            }
            if !(self.min[a].is_finite() && self.max[a].is_finite() && self.max[a] > self.min[a]) {
                return Err(CharacteristicsError::InvalidGrid(format!(
                    "empty or non-finite extent on axis {a}"
                )));
            }
        }
        Ok(())
    }

    /// Cube of `resolution`³ points enclosing the sphere with a small margin.
    pub fn around_sphere(center: Vec3, radius: f64, resolution: usize) -> Result<Self, CharacteristicsError> {
        let h = radius * 1.02;
        GridSpec::new(
            [center.x - h, center.y - h, center.z - h],
            [center.x + h, center.y + h, center.z + h],
            [resolution; 3],
        )
    }

    /// Grid over the sphere whose lowest layer sits half a cell below the
    /// ground plane. Nothing below ground is ever observed, so the field is
    /// only meshed where it is constrained; the ground cap still closes the
    /// mesh because the lowest layer lies outside an analytic building.
    pub fn above_ground(center: Vec3, radius: f64, resolution: usize) -> Result<Self, CharacteristicsError> {
        let full = GridSpec::around_sphere(center, radius, resolution)?;
        let cell = full.cell()[2];
        let z0 = -0.5 * cell;
        if full.max[2] <= z0 + cell {
            return Err(CharacteristicsError::InvalidGrid("sphere lies below ground".into()));
        }
        let nz = ((full.max[2] - z0) / cell).ceil() as usize + 1;
        Ok(GridSpec {
            min: [full.min[0], full.min[1], z0.max(full.min[2])],
            max: [full.max[0], full.max[1], z0.max(full.min[2]) + cell * (nz - 1) as f64],
            resolution: [full.resolution[0], full.resolution[1], nz],
        })
    }

    pub fn cell(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| (self.max[a] - self.min[a]) / (self.resolution[a] - 1) as f64)
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let c = self.cell();
        Vec3::new(
            self.min[0] + i as f64 * c[0],
            self.min[1] + j as f64 * c[1],
            self.min[2] + k as f64 * c[2],
        )
    }

    pub fn max_cell(&self) -> f64 {
        self.cell().into_iter().fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Marching cubes
// ---------------------------------------------------------------------------

/// Triangle mesh with optional per-vertex labels and the field value at each
/// vertex (a quality check on edge interpolation).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SemanticMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub labels: Vec<SemanticClass>,
    pub residuals: Vec<f64>,
}

impl SemanticMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i as usize]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Signed enclosed volume by the divergence theorem (positive for
    /// outward-facing triangles).
    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Largest |field| over the vertices.
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Every vertex scaled about the origin.
    pub fn scaled(&self, k: f64) -> SemanticMesh {
        SemanticMesh {
            vertices: self.vertices.iter().map(|v| v * k).collect(),
            residuals: self.residuals.iter().map(|r| r * k).collect(),
            ..self.clone()
        }
    }
}

// Corner offsets and edge endpoints in the usual table numbering.
const CORNERS: [[usize; 3]; 8] =
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];
const EDGES: [[usize; 2]; 12] =
    [[0, 1], [1, 2], [2, 3], [3, 0], [4, 5], [5, 6], [6, 7], [7, 4], [0, 4], [1, 5], [2, 6], [3, 7]];

/// Polygonises `{f = iso}`. Vertices are interpolated linearly along cell
/// edges and shared between cells through a key on the lattice edge, so the
/// output is watertight except where the surface leaves the grid. Corners with
/// `f < iso` count as inside; triangles face outward.
pub fn marching_cubes<F: Field + ?Sized>(field: &F, grid: &GridSpec, iso: f64) -> Result<SemanticMesh, CharacteristicsError> {
    grid.validate()?;
    let [nx, ny, nz] = grid.resolution;
    let layer = |k: usize| -> Vec<f64> {
        let pts: Vec<Vec3> = (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j))).map(|(i, j)| grid.point(i, j, k)).collect();
        field.sdf_batch(&pts)
    };
    // Lattice edge id: 3 * point index + axis.
    let point_id = |i: usize, j: usize, k: usize| ((k * ny + j) * nx + i) as u64;
    let mut welded: HashMap<u64, u32> = HashMap::new();
    let mut mesh = SemanticMesh::default();
    let mut lo = layer(0);
    for k in 0..nz - 1 {
        let hi = layer(k + 1);
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(CharacteristicsError::InvalidGrid(format!("non-finite field value near layer {k}")));
        }
        let value = |i: usize, j: usize, dz: usize| if dz == 0 { lo[j * nx + i] } else { hi[j * nx + i] };
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let vals = CORNERS.map(|c| value(i + c[0], j + c[1], c[2]));
                let mut case = 0usize;
                for (b, v) in vals.iter().enumerate() {
                    if *v < iso {
                        case |= 1 << b;
                    }
                }
                let mask = EDGE_TABLE[case];
                if mask == 0 {
                    continue;
                }
                let mut vert = [u32::MAX; 12];
                for (e, [a, b]) in EDGES.iter().enumerate() {
                    if mask & (1 << e) == 0 {
                        continue;
                    }
                    let (ca, cb) = (CORNERS[*a], CORNERS[*b]);
                    let axis = (0..3).find(|&d| ca[d] != cb[d]).unwrap();
                    let base = [0, 1, 2].map(|d| ca[d].min(cb[d]));
                    let key = 3 * point_id(i + base[0], j + base[1], k + base[2]) + axis as u64;
                    vert[e] = *welded.entry(key).or_insert_with(|| {
                        let (fa, fb) = (vals[*a], vals[*b]);
                        let t = if fa == fb { 0.5 } else { ((iso - fa) / (fb - fa)).clamp(0.0, 1.0) };
                        let pa = grid.point(i + ca[0], j + ca[1], k + ca[2]);
                        let pb = grid.point(i + cb[0], j + cb[1], k + cb[2]);
                        mesh.vertices.push(pa + (pb - pa) * t);
                        (mesh.vertices.len() - 1) as u32
                    });
                }
                for tri in TRI_TABLE[case].chunks(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    // The table winds clockwise seen from outside.
                    mesh.triangles.push([vert[tri[0] as usize], vert[tri[2] as usize], vert[tri[1] as usize]]);
                }
            }
        }
        lo = hi;
    }
    mesh.residuals = field.sdf_batch(&mesh.vertices).into_iter().map(|f| f - iso).collect();
    Ok(mesh)
}

/// Index of the largest logit; ties go to the lower id.
pub fn argmax_label(logits: &[f64]) -> SemanticClass {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    SemanticClass::from_id(best as u8).unwrap_or(SemanticClass::Background)
}

/// Labels every vertex with the field's most likely class.
pub fn assign_vertex_semantics<F: Field + ?Sized>(mut mesh: SemanticMesh, field: &F) -> SemanticMesh {
    mesh.labels = field.semantic_logits_batch(&mesh.vertices).iter().map(|l| argmax_label(l)).collect();
    mesh
}

/// Splits every triangle whose vertices disagree on their label into four,
/// labelling the new edge midpoints from the field, `levels` times over.
/// Single-label triangles are untouched, so only the placement of label
/// boundaries changes; area sums converge as the boundary error halves with
/// each level. Midpoints are shared between split neighbours, but an unsplit
/// neighbour keeps its long edge (a T-junction), which does not affect areas.
pub fn refine_label_boundaries<F: Field + ?Sized>(mut mesh: SemanticMesh, field: &F, levels: usize) -> SemanticMesh {
    if mesh.labels.len() != mesh.vertices.len() {
        return mesh;
    }
    for _ in 0..levels {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut fresh = Vec::new();
        let mut triangles = Vec::with_capacity(mesh.triangles.len());
        for &t in &mesh.triangles {
            let [a, b, c] = t;
            let (la, lb, lc) = (mesh.labels[a as usize], mesh.labels[b as usize], mesh.labels[c as usize]);
            if la == lb && lb == lc {
                triangles.push(t);
                continue;
            }
            let mut mid = |p: u32, q: u32| {
                *midpoints.entry((p.min(q), p.max(q))).or_insert_with(|| {
                    let m = (mesh.vertices[p as usize] + mesh.vertices[q as usize]) * 0.5;
                    mesh.vertices.push(m);
                    fresh.push(m);
                    (mesh.vertices.len() - 1) as u32
                })
            };
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        if fresh.is_empty() {
            break;
        }
        mesh.triangles = triangles;
        mesh.labels.extend(field.semantic_logits_batch(&fresh).iter().map(|l| argmax_label(l)));
        mesh.residuals.extend(field.sdf_batch(&fresh));
    }
    mesh
}

// ---------------------------------------------------------------------------
// Window-to-wall ratio
// ---------------------------------------------------------------------------

/// Split of a triangle's area by the share of its vertices in each class:
/// `[window, wall, other]`.
pub fn triangle_contributions(area: f64, labels: [SemanticClass; 3]) -> [f64; 3] {
    let count = |c| labels.iter().filter(|&&l| l == c).count() as f64;
    let window = count(SemanticClass::Window) / 3.0 * area;
    let wall = count(SemanticClass::Wall) / 3.0 * area;
    [window, wall, area - window - wall]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WwrEstimate {
    pub wwr: f64,
    pub window_area: f64,
    pub wall_area: f64,
    /// Area of roof, door and background triangles (neither window nor wall).
    pub other_area: f64,
}

impl WwrEstimate {
    /// Window share of the whole facade, `window / (window + wall)`.
    pub fn glazing_fraction(&self) -> f64 {
        self.window_area / (self.window_area + self.wall_area)
    }
}

/// Window and wall areas of a labelled mesh with fractional weighting of
/// mixed triangles.
pub fn wwr(mesh: &SemanticMesh) -> Result<WwrEstimate, CharacteristicsError> {
    if mesh.labels.len() != mesh.vertices.len() {
        return Err(CharacteristicsError::LabelsUnset);
    }
    let mut sums = [0.0; 3];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.triangle_area(t);
        if a < EPS_TRI {
            continue;
        }
        let c = triangle_contributions(a, tri.map(|i| mesh.labels[i as usize]));
        for (s, v) in sums.iter_mut().zip(c) {
            *s += v;
        }
    }
    let [window_area, wall_area, other_area] = sums;
    if wall_area <= 0.0 {
        return Err(CharacteristicsError::ZeroWallArea);
    }
    Ok(WwrEstimate { wwr: window_area / wall_area, window_area, wall_area, other_area })
}

// ---------------------------------------------------------------------------
// Footprint
// ---------------------------------------------------------------------------

/// Closed vertex loops (implicitly closed, last vertex not repeated). Outer
/// boundaries are counter-clockwise, holes clockwise.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FootprintPolygon {
    pub loops: Vec<Vec<[f64; 2]>>,
}

pub fn signed_area(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

fn ring_contains(ring: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

impl FootprintPolygon {
    pub fn from_ring(ring: Vec<[f64; 2]>) -> Self {
        let mut p = FootprintPolygon { loops: vec![ring] };
        p.orient();
        p
    }

    pub fn is_empty(&self) -> bool {
        self.loops.is_empty()
    }

    /// Net area (outer loops minus holes).
    pub fn area(&self) -> f64 {
        self.loops.iter().map(|l| signed_area(l)).sum()
    }

    pub fn vertex_count(&self) -> usize {
        self.loops.iter().map(Vec::len).sum()
    }

    /// Even-odd membership over all loops.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.loops.iter().filter(|l| ring_contains(l, p)).count() % 2 == 1
    }

    /// Orients loops by nesting depth: even depth counter-clockwise, odd clockwise.
    fn orient(&mut self) {
        let depths: Vec<usize> = (0..self.loops.len())
            .map(|i| {
                let probe = self.loops[i][0];
                (0..self.loops.len()).filter(|&j| j != i && ring_contains(&self.loops[j], probe)).count()
            })
            .collect();
        for (l, d) in self.loops.iter_mut().zip(depths) {
            let ccw = signed_area(l) > 0.0;
            if ccw == (d % 2 == 1) {
                l.reverse();
            }
        }
    }

    fn bounds(&self) -> Option<([f64; 2], [f64; 2])> {
        let pts = self.loops.iter().flatten();
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in pts {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        lo[0].is_finite().then_some((lo, hi))
    }

    /// Cell-centre coverage of an `n × n` raster over the given box, row by row.
    fn rasterize(&self, lo: [f64; 2], hi: [f64; 2], n: usize) -> Vec<bool> {
        let (dx, dy) = ((hi[0] - lo[0]) / n as f64, (hi[1] - lo[1]) / n as f64);
        let mut out = vec![false; n * n];
        let mut xs = Vec::new();
        for r in 0..n {
            let y = lo[1] + (r as f64 + 0.5) * dy;
            xs.clear();
            for ring in &self.loops {
                let m = ring.len();
                for i in 0..m {
                    let (a, b) = (ring[i], ring[(i + 1) % m]);
                    if (a[1] > y) != (b[1] > y) {
                        xs.push(a[0] + (y - a[1]) / (b[1] - a[1]) * (b[0] - a[0]));
                    }
                }
            }
            xs.sort_by(f64::total_cmp);
            for span in xs.chunks_exact(2) {
                // Cells whose centre lies in [x0, x1).
                let c0 = ((span[0] - lo[0]) / dx - 0.5).ceil().max(0.0) as usize;
                let c1 = (((span[1] - lo[0]) / dx - 0.5).ceil().max(0.0) as usize).min(n);
                for c in c0..c1 {
                    out[r * n + c] = true;
                }
            }
        }
        out
    }
}

/// Intersection over union of two footprints, by rasterising both onto an
/// [`IOU_RASTER`]² grid over their joint bounding box. Returns 0 and a
/// warning flag when either footprint is empty.
pub fn footprint_iou(estimated: &FootprintPolygon, truth: &FootprintPolygon) -> (f64, bool) {
    let (Some(a), Some(b)) = (estimated.bounds(), truth.bounds()) else {
        return (0.0, true);
    };
    let lo = [a.0[0].min(b.0[0]), a.0[1].min(b.0[1])];
    let hi = [a.1[0].max(b.1[0]), a.1[1].max(b.1[1])];
    let ra = estimated.rasterize(lo, hi, IOU_RASTER);
    let rb = truth.rasterize(lo, hi, IOU_RASTER);
    let inter = ra.iter().zip(&rb).filter(|(x, y)| **x && **y).count();
    let union = ra.iter().zip(&rb).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        return (0.0, true);
    }
    (inter as f64 / union as f64, false)
}

/// Drops repeated vertices and vertices within `tol` of the line through
/// their neighbours.
fn simplify_ring(mut ring: Vec<[f64; 2]>, tol: f64) -> Vec<[f64; 2]> {
    loop {
        let n = ring.len();
        if n < 3 {
            return ring;
        }
        let redundant = (0..n).find(|&i| {
            let (a, p, b) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
            let (ab, ap) = ([b[0] - a[0], b[1] - a[1]], [p[0] - a[0], p[1] - a[1]]);
            let len = ab[0].hypot(ab[1]);
            if len <= tol {
                return ap[0].hypot(ap[1]) <= tol || p == a;
            }
            let off = (ab[0] * ap[1] - ab[1] * ap[0]).abs() / len;
            let along = (ab[0] * ap[0] + ab[1] * ap[1]) / len;
            off <= tol && along >= -tol && along <= len + tol
        });
        match redundant {
            Some(i) => {
                ring.remove(i);
            }
            None => return ring,
        }
    }
}

/// Contour of `{f ≤ 0}` on the horizontal slice `z` by marching squares over
/// the x/y extent and resolution of `grid`. Samples outside the grid count as
/// empty, so loops always close.
pub fn footprint<F: Field + ?Sized>(field: &F, grid: &GridSpec, z: f64) -> Result<FootprintPolygon, CharacteristicsError> {
    grid.validate()?;
    let [nx, ny, _] = grid.resolution;
    let c = grid.cell();
    let (px, py) = (nx + 2, ny + 2);
    let coord = |i: usize, j: usize| [grid.min[0] + (i as f64 - 1.0) * c[0], grid.min[1] + (j as f64 - 1.0) * c[1]];
    let pts: Vec<Vec3> = (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j))).map(|(i, j)| {
        Vec3::new(grid.min[0] + i as f64 * c[0], grid.min[1] + j as f64 * c[1], z)
    }).collect();
    let inner = field.sdf_batch(&pts);
    if inner.iter().any(|v| !v.is_finite()) {
        return Err(CharacteristicsError::InvalidGrid("non-finite field value on the slice".into()));
    }
    // Padded lattice with a ring of positive values.
    let mut f = vec![1.0; px * py];
    for j in 0..ny {
        for i in 0..nx {
            f[(j + 1) * px + i + 1] = inner[j * nx + i];
        }
    }
    let val = |i: usize, j: usize| f[j * px + i];
    let inside = |i: usize, j: usize| val(i, j) <= 0.0;
    // Edge ids: horizontal edge (i,j)-(i+1,j) = 2*(j*px+i), vertical (i,j)-(i,j+1) = +1.
    let h_edge = |i: usize, j: usize| 2 * (j * px + i);
    let v_edge = |i: usize, j: usize| 2 * (j * px + i) + 1;
    let edge_point = |e: usize| -> [f64; 2] {
        let (p, vertical) = (e / 2, e % 2 == 1);
        let (i, j) = (p % px, p / px);
        let (i2, j2) = if vertical { (i, j + 1) } else { (i + 1, j) };
        let (fa, fb) = (val(i, j), val(i2, j2));
        let t = if fa == fb { 0.5 } else { (fa / (fa - fb)).clamp(0.0, 1.0) };
        let (a, b) = (coord(i, j), coord(i2, j2));
        [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
    };
    // Directed segments with the inside on the left; each edge starts at most one.
    let mut next: HashMap<usize, usize> = HashMap::new();
    let mut order: Vec<usize> = Vec::new();
    for j in 0..py - 1 {
        for i in 0..px - 1 {
            let bl = inside(i, j) as usize;
            let br = inside(i + 1, j) as usize;
            let tr = inside(i + 1, j + 1) as usize;
            let tl = inside(i, j + 1) as usize;
            let case = bl | br << 1 | tr << 2 | tl << 3;
            let (b, r, t, l) = (h_edge(i, j), v_edge(i + 1, j), h_edge(i, j + 1), v_edge(i, j));
            let centre_inside = || (val(i, j) + val(i + 1, j) + val(i + 1, j + 1) + val(i, j + 1)) <= 0.0;
            let segs: &[(usize, usize)] = match case {
                0 | 15 => &[],
                1 => &[(b, l)],
                2 => &[(r, b)],
                3 => &[(r, l)],
                4 => &[(t, r)],
                5 => {
                    if centre_inside() {
                        &[(b, r), (t, l)]
                    } else {
                        &[(b, l), (t, r)]
                    }
                }
                6 => &[(t, b)],
                7 => &[(t, l)],
                8 => &[(l, t)],
                9 => &[(b, t)],
                10 => {
                    if centre_inside() {
                        &[(l, b), (r, t)]
                    } else {
                        &[(r, b), (l, t)]
                    }
                }
                11 => &[(r, t)],
                12 => &[(l, r)],
                13 => &[(b, r)],
                14 => &[(l, b)],
                _ => unreachable!(),
            };
            for &(s, e) in segs {
                next.insert(s, e);
                order.push(s);
            }
        }
    }
    let mut loops = Vec::new();
    for start in order {
        let Some(mut e) = next.remove(&start) else { continue };
        let mut ring = vec![edge_point(start)];
        while e != start {
            ring.push(edge_point(e));
            match next.remove(&e) {
                Some(n) => e = n,
                None => break,
            }
        }
        let ring = simplify_ring(ring, 1e-9 * c[0].max(c[1]));
        if ring.len() >= 3 && signed_area(&ring).abs() > EPS_TRI {
            loops.push(ring);
        }
    }
    let mut poly = FootprintPolygon { loops };
    poly.orient();
    Ok(poly)
}

// ---------------------------------------------------------------------------
// Report and exports
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicsReport {
    pub source: String,
    /// Length unit of every area and coordinate.
    pub units: String,
    pub grid: GridSpec,
    pub refine_levels: usize,
    pub triangles: usize,
    pub max_residual: f64,
    pub wwr: f64,
    pub window_area: f64,
    pub wall_area: f64,
    pub other_area: f64,
    /// `window / (window + wall)`, the share of the whole facade that is glazed.
    pub glazing_fraction: f64,
    pub footprint_area: f64,
    pub footprint_vertices: usize,
    pub ground_truth: Option<TruthComparison>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthComparison {
    pub wwr: f64,
    pub window_area: f64,
    pub wall_area: f64,
    pub footprint_area: f64,
    /// Relative errors are undefined (NaN, `null` in JSON) for a zero truth.
    #[serde(with = "nan_as_null")]
    pub wwr_error_pct: f64,
    #[serde(with = "nan_as_null")]
    pub window_area_error_pct: f64,
    #[serde(with = "nan_as_null")]
    pub wall_area_error_pct: f64,
    pub footprint_iou: f64,
    pub iou_warning: bool,
}

/// Serde adapter writing non-finite floats as `null` and reading `null` back
/// as NaN.
pub mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

pub fn percent_error(estimate: f64, truth: f64) -> f64 {
    (estimate - truth).abs() / truth.abs() * 100.0
}

/// Everything measured for one field.
#[derive(Clone, Debug)]
pub struct Characteristics {
    pub mesh: SemanticMesh,
    pub wwr: WwrEstimate,
    pub footprint: FootprintPolygon,
    pub report: CharacteristicsReport,
}

/// Meshes the field on `grid`, labels the mesh (refining label boundaries
/// `refine_levels` times), measures WWR, extracts the
/// footprint half a cell above ground and compares with `truth` when given.
pub fn estimate<F: Field + ?Sized>(
    field: &F,
    grid: &GridSpec,
    refine_levels: usize,
    source: &str,
    truth: Option<&GroundTruth>,
) -> Result<Characteristics, CharacteristicsError> {
    let mesh = marching_cubes(field, grid, 0.0)?;
    if mesh.is_empty() {
        return Err(CharacteristicsError::EmptySurface);
    }
    let mesh = refine_label_boundaries(assign_vertex_semantics(mesh, field), field, refine_levels);
    let w = wwr(&mesh)?;
    let fp = footprint(field, grid, 0.5 * grid.cell()[2])?;
    let ground_truth = truth.map(|gt| {
        let (iou, warn) = footprint_iou(&fp, &FootprintPolygon::from_ring(gt.footprint.clone()));
        TruthComparison {
            wwr: gt.wwr,
            window_area: gt.window_area,
            wall_area: gt.wall_area,
            footprint_area: gt.footprint_area,
            wwr_error_pct: percent_error(w.wwr, gt.wwr),
            window_area_error_pct: percent_error(w.window_area, gt.window_area),
            wall_area_error_pct: percent_error(w.wall_area, gt.wall_area),
            footprint_iou: iou,
            iou_warning: warn,
        }
    });
    let report = CharacteristicsReport {
        source: source.to_string(),
        units: "m".into(),
        grid: *grid,
        refine_levels,
        triangles: mesh.triangles.len(),
        max_residual: mesh.max_residual(),
        wwr: w.wwr,
        window_area: w.window_area,
        wall_area: w.wall_area,
        other_area: w.other_area,
        glazing_fraction: w.glazing_fraction(),
        footprint_area: fp.area(),
        footprint_vertices: fp.vertex_count(),
        ground_truth,
    };
    Ok(Characteristics { mesh, wwr: w, footprint: fp, report })
}

/// Wavefront OBJ; labels go in a leading comment block (`# label <vertex> <id>`).
pub fn mesh_to_obj(mesh: &SemanticMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# semantic mesh: {} vertices, {} triangles", mesh.vertices.len(), mesh.triangles.len());
    let _ = writeln!(s, "# classes: 0 wall, 1 window, 2 roof, 3 door, 4 background");
    for (i, l) in mesh.labels.iter().enumerate() {
        let _ = writeln!(s, "# label {i} {}", l.id());
    }
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn labels_to_csv(mesh: &SemanticMesh) -> String {
    let mut s = String::from("vertex,label\n");
    for (i, l) in mesh.labels.iter().enumerate() {
        let _ = writeln!(s, "{i},{}", l.id());
    }
    s
}

pub fn footprint_to_csv(fp: &FootprintPolygon) -> String {
    let mut s = String::from("loop,vertex,x,y\n");
    for (li, ring) in fp.loops.iter().enumerate() {
        for (vi, p) in ring.iter().enumerate() {
            let _ = writeln!(s, "{li},{vi},{},{}", p[0], p[1]);
        }
    }
    s
}

/// Writes `mesh.obj`, `mesh_labels.csv`, `footprint.csv` and `report.json`.
pub fn write_outputs(c: &Characteristics, dir: &Path) -> Result<(), CharacteristicsError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("mesh.obj"), mesh_to_obj(&c.mesh))?;
    std::fs::write(dir.join("mesh_labels.csv"), labels_to_csv(&c.mesh))?;
    std::fs::write(dir.join("footprint.csv"), footprint_to_csv(&c.footprint))?;
    let json = serde_json::to_string_pretty(&c.report).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("report.json"), json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::FieldSample;
    use SemanticClass::*;

    struct Sdf<G: Fn(Vec3) -> f64 + Sync>(G);

    impl<G: Fn(Vec3) -> f64 + Sync> Field for Sdf<G> {
        fn num_classes(&self) -> usize {
            SemanticClass::COUNT
        }
        fn sdf(&self, x: Vec3) -> f64 {
            (self.0)(x)
        }
        fn sample(&self, x: Vec3, _: Vec3) -> FieldSample {
            FieldSample { sdf: self.sdf(x), color: [0.0; 3], logits: vec![0.0; 5] }
        }
        fn semantic_logits(&self, _: Vec3) -> Vec<f64> {
            vec![0.0; 5]
        }
        fn gradient_step(&self) -> f64 {
            1e-6
        }
    }

    fn cube_grid(h: f64, n: usize) -> GridSpec {
        GridSpec::new([-h; 3], [h; 3], [n; 3]).unwrap()
    }

    #[test]
    fn triangle_contribution_example() {
        let [w, wall, o] = triangle_contributions(0.6, [Window, Wall, Wall]);
        assert!((w - 0.2).abs() < 1e-15 && (wall - 0.4).abs() < 1e-15 && o.abs() < 1e-15);
    }

    #[test]
    fn unit_cube_with_one_window_face() {
        // Two triangles per face: one face Window, four Wall, the top Roof.
        let v: Vec<Vec3> = (0..8).map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, (i >> 2) as f64)).collect();
        let faces: [([u32; 4], SemanticClass); 6] = [
            ([0, 1, 5, 4], Window),
            ([2, 3, 7, 6], Wall),
            ([0, 2, 6, 4], Wall),
            ([1, 3, 7, 5], Wall),
            ([0, 1, 3, 2], Wall),
            ([4, 5, 7, 6], Roof),
        ];
        let mut mesh = SemanticMesh::default();
        for (q, label) in faces {
            let base = mesh.vertices.len() as u32;
            for &i in &q {
                mesh.vertices.push(v[i as usize]);
                mesh.labels.push(label);
            }
            mesh.triangles.push([base, base + 1, base + 2]);
            mesh.triangles.push([base, base + 2, base + 3]);
        }
        let w = wwr(&mesh).unwrap();
        assert!((w.wwr - 0.25).abs() < 1e-12, "{w:?}");
        assert!((w.other_area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_wall_area_is_an_error() {
        let mesh = SemanticMesh {
            vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            triangles: vec![[0, 1, 2]],
            labels: vec![Window; 3],
            residuals: vec![0.0; 3],
        };
        assert!(matches!(wwr(&mesh), Err(CharacteristicsError::ZeroWallArea)));
        let unlabeled = SemanticMesh { labels: vec![], ..mesh };
        assert!(matches!(wwr(&unlabeled), Err(CharacteristicsError::LabelsUnset)));
    }

    #[test]
    fn ties_go_to_lower_id() {
        assert_eq!(argmax_label(&[0.0, 3.0, 3.0, 1.0, 0.0]), Window);
        assert_eq!(argmax_label(&[2.0; 5]), Wall);
    }

    #[test]
    fn all_positive_field_gives_empty_mesh() {
        let m = marching_cubes(&Sdf(|_| 1.0), &cube_grid(1.0, 8), 0.0).unwrap();
        assert!(m.is_empty() && m.vertices.is_empty());
    }

    #[test]
    fn sphere_mesh_faces_outward_and_is_closed() {
        let m = marching_cubes(&Sdf(|x: Vec3| x.norm() - 1.0), &cube_grid(2.0, 24), 0.0).unwrap();
        assert!(m.volume() > 0.0);
        let mut edges: HashMap<(u32, u32), i32> = HashMap::new();
        for t in &m.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += if a < b { 1 } else { -1 };
            }
        }
        // Each undirected edge used once in each direction.
        assert!(edges.values().all(|&c| c == 0));
        assert!(m.max_residual() <= 1.5 * cube_grid(2.0, 24).max_cell());
    }

    #[test]
    fn grid_needs_two_points_per_axis() {
        assert!(GridSpec::new([0.0; 3], [1.0; 3], [1, 4, 4]).is_err());
        assert!(GridSpec::new([0.0; 3], [0.0, 1.0, 1.0], [4; 3]).is_err());
    }

    #[test]
    fn above_ground_grid_starts_half_a_cell_below_zero() {
        let g = GridSpec::above_ground(Vec3::new(0.0, 0.0, 0.5), 1.0, 65).unwrap();
        let c = g.cell();
        assert!((g.min[2] + 0.5 * c[2]).abs() < 1e-12);
        assert!((c[2] - c[0]).abs() < 1e-12);
        assert!(g.max[2] >= 0.5 + 1.0);
    }

    #[test]
    fn square_footprint_and_orientation() {
        let sq = Sdf(|x: Vec3| (x.x.abs() - 0.5).max(x.y.abs() - 0.5));
        let g = GridSpec::new([-1.0, -1.0, 0.0], [1.0, 1.0, 1.0], [101, 101, 2]).unwrap();
        let fp = footprint(&sq, &g, 0.01).unwrap();
        assert_eq!(fp.loops.len(), 1);
        assert!((fp.area() - 1.0).abs() < 2.0 / 100.0);
        assert!(signed_area(&fp.loops[0]) > 0.0);
    }

    #[test]
    fn annulus_footprint_has_clockwise_hole() {
        let ring = Sdf(|x: Vec3| {
            let r = (x.x * x.x + x.y * x.y).sqrt();
            (r - 0.8).max(0.4 - r)
        });
        let g = GridSpec::new([-1.0, -1.0, 0.0], [1.0, 1.0, 1.0], [201, 201, 2]).unwrap();
        let fp = footprint(&ring, &g, 0.0).unwrap();
        assert_eq!(fp.loops.len(), 2);
        let areas: Vec<f64> = fp.loops.iter().map(|l| signed_area(l)).collect();
        assert!(areas.iter().any(|&a| a > 0.0) && areas.iter().any(|&a| a < 0.0));
        let exact = std::f64::consts::PI * (0.64 - 0.16);
        assert!((fp.area() - exact).abs() / exact < 0.01);
        assert!(!fp.contains([0.0, 0.0]) && fp.contains([0.6, 0.0]));
    }

    #[test]
    fn floating_object_has_no_footprint() {
        let ball = Sdf(|x: Vec3| (x - Vec3::new(0.0, 0.0, 2.0)).norm() - 1.0);
        let g = GridSpec::new([-2.0; 3], [2.0; 3], [41; 3]).unwrap();
        assert!(footprint(&ball, &g, 0.05).unwrap().is_empty());
    }

    fn square(x0: f64, y0: f64, s: f64) -> FootprintPolygon {
        FootprintPolygon::from_ring(vec![[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]])
    }

    #[test]
    fn iou_examples() {
        let a = square(0.0, 0.0, 1.0);
        assert_eq!(footprint_iou(&a, &a), (1.0, false));
        assert_eq!(footprint_iou(&a, &square(3.0, 3.0, 1.0)).0, 0.0);
        let (iou, _) = footprint_iou(&a, &square(0.5, 0.0, 1.0));
        assert!((iou - 1.0 / 3.0).abs() < 2e-3, "{iou}");
        assert_eq!(footprint_iou(&a, &FootprintPolygon::default()), (0.0, true));
    }

    #[test]
    fn from_ring_orients_counter_clockwise() {
        let fp = FootprintPolygon::from_ring(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]);
        assert!((fp.area() - 1.0).abs() < 1e-15);
    }
}
