//! Procedural buildings as analytic semantic signed distance fields.
//!
//! A [`BuildingSpec`] describes an extruded footprint (straight edges and
//! outward circular arcs), flush window/door patches on each facade, an
//! optional roof fascia band and protruding balcony slabs. [`build_scene`]
//! turns it into an [`AnalyticScene`], a CSG tree of exact primitive SDFs whose
//! surface points carry semantic labels, and [`ground_truth`] computes the
//! envelope characteristics of the same spec in closed form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Vec2, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("invalid footprint: {0}")]
    InvalidFootprint(String),
    #[error("footprint must be counter-clockwise")]
    NotCounterClockwise,
    #[error("footprint is self-intersecting")]
    SelfIntersecting,
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("facade {facade} does not exist (footprint has {count} edges)")]
    FacadeOutOfRange { facade: usize, count: usize },
    #[error("facade {facade}: {detail}")]
    PatchLayout { facade: usize, detail: String },
    #[error("spec does not match its kind: {0}")]
    KindMismatch(String),
}

/// Semantic classes. Ids are contiguous from zero and `Background` is last.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum SemanticClass {
    Wall = 0,
    Window = 1,
    Roof = 2,
    Door = 3,
    Background = 4,
}

impl SemanticClass {
    pub const COUNT: usize = 5;
    pub const ALL: [SemanticClass; 5] = [
        SemanticClass::Wall,
        SemanticClass::Window,
        SemanticClass::Roof,
        SemanticClass::Door,
        SemanticClass::Background,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticClass::Wall => "wall",
            SemanticClass::Window => "window",
            SemanticClass::Roof => "roof",
            SemanticClass::Door => "door",
            SemanticClass::Background => "background",
        }
    }

    /// Flat albedo used by the ground-truth renderer.
    pub fn albedo(self) -> [f64; 3] {
        match self {
            SemanticClass::Wall => [0.85, 0.80, 0.70],
            SemanticClass::Window => [0.12, 0.22, 0.40],
            SemanticClass::Roof => [0.55, 0.25, 0.20],
            SemanticClass::Door => [0.40, 0.25, 0.10],
            SemanticClass::Background => BACKGROUND_COLOR,
        }
    }
}

/// Constant color of empty space, shared by both renderers and the losses.
pub const BACKGROUND_COLOR: [f64; 3] = [0.62, 0.78, 0.95];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BuildingKind {
    Skyscraper,
    LShaped,
    Curved,
    Balcony,
}

/// Replaces footprint edge `edge` (from vertex `edge` to `edge + 1`) by a
/// circular arc bulging outward with the given sagitta.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcEdge {
    pub edge: usize,
    pub sagitta: f64,
}

/// Regular grid of windows on one facade. Rows split the facade height below
/// the roof band into equal floors; columns split the facade length into equal
/// bays. Each window sits `sill` above its floor line, centred in its bay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowGrid {
    pub facade: usize,
    pub rows: u32,
    pub columns: u32,
    pub width: f64,
    pub height: f64,
    pub sill: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoorSpec {
    pub facade: usize,
    /// Position of the door centre along the facade, metres from its start.
    pub center: f64,
    pub width: f64,
    pub height: f64,
}

/// Horizontal slab protruding from a straight facade.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalconySpec {
    pub facade: usize,
    pub center: f64,
    pub width: f64,
    pub depth: f64,
    pub bottom: f64,
    pub thickness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildingSpec {
    pub kind: BuildingKind,
    /// Counter-clockwise footprint vertices in metres; the building stands on z = 0.
    pub footprint: Vec<[f64; 2]>,
    #[serde(default)]
    pub arcs: Vec<ArcEdge>,
    pub height: f64,
    pub floors: u32,
    /// Height of the roof fascia band at the top of every facade (labelled Roof).
    #[serde(default)]
    pub roof_thickness: f64,
    #[serde(default)]
    pub windows: Vec<WindowGrid>,
    #[serde(default)]
    pub doors: Vec<DoorSpec>,
    #[serde(default)]
    pub balconies: Vec<BalconySpec>,
}

/// Axis-aligned rectangle in facade coordinates: `s` runs along the facade
/// (arc length for curved facades), `z` is height above ground.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacadeRect {
    pub s0: f64,
    pub s1: f64,
    pub z0: f64,
    pub z1: f64,
}

impl FacadeRect {
    pub fn area(&self) -> f64 {
        (self.s1 - self.s0) * (self.z1 - self.z0)
    }

    pub fn contains(&self, s: f64, z: f64) -> bool {
        s >= self.s0 && s <= self.s1 && z >= self.z0 && z <= self.z1
    }

    fn overlaps(&self, o: &FacadeRect) -> bool {
        self.s0 < o.s1 && o.s0 < self.s1 && self.z0 < o.z1 && o.z0 < self.z1
    }

    fn strictly_inside(&self, length: f64, top: f64) -> bool {
        self.s0 > 0.0 && self.s1 < length && self.z0 > 0.0 && self.z1 < top
    }
}

// ---------------------------------------------------------------------------
// 2D profile
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum Segment {
    Line { a: Vec2, b: Vec2 },
    /// Counter-clockwise arc around `center` starting at `start` radians.
    Arc { center: Vec2, radius: f64, start: f64, sweep: f64 },
}

fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}

impl Segment {
    pub fn length(&self) -> f64 {
        match self {
            Segment::Line { a, b } => (b - a).norm(),
            Segment::Arc { radius, sweep, .. } => radius * sweep,
        }
    }

    pub fn start_point(&self) -> Vec2 {
        match self {
            Segment::Line { a, .. } => *a,
            Segment::Arc { center, radius, start, .. } => {
                center + *radius * Vec2::new(start.cos(), start.sin())
            }
        }
    }

    pub fn end_point(&self) -> Vec2 {
        self.point_at(self.length())
    }

    /// Point at arc length `s` from the start.
    pub fn point_at(&self, s: f64) -> Vec2 {
        match self {
            Segment::Line { a, b } => {
                let l = (b - a).norm();
                a + (b - a) * (s / l)
            }
            Segment::Arc { center, radius, start, .. } => {
                let ang = start + s / radius;
                center + *radius * Vec2::new(ang.cos(), ang.sin())
            }
        }
    }

    /// Outward unit normal at arc length `s`.
    pub fn outward_normal(&self, s: f64) -> Vec2 {
        match self {
            Segment::Line { a, b } => {
                let d = (b - a).normalize();
                Vec2::new(d.y, -d.x)
            }
            Segment::Arc { start, radius, .. } => {
                let ang = start + s / radius;
                Vec2::new(ang.cos(), ang.sin())
            }
        }
    }

    /// Unsigned distance from `p` to the segment.
    pub fn distance(&self, p: Vec2) -> f64 {
        match self {
            Segment::Line { a, b } => {
                let ab = b - a;
                let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                (p - (a + ab * t)).norm()
            }
            Segment::Arc { center, radius, start, sweep } => {
                let d = p - center;
                let rel = wrap_angle(d.y.atan2(d.x) - start);
                if rel <= *sweep {
                    (d.norm() - radius).abs()
                } else {
                    (p - self.start_point()).norm().min((p - self.end_point()).norm())
                }
            }
        }
    }

    /// `(s, offset)`: arc length of the closest point along the (extended)
    /// facade and signed outward offset from it.
    pub fn facade_coords(&self, p: Vec2) -> (f64, f64) {
        match self {
            Segment::Line { a, b } => {
                let l = (b - a).norm();
                let d = (b - a) / l;
                let n = Vec2::new(d.y, -d.x);
                ((p - a).dot(&d), (p - a).dot(&n))
            }
            Segment::Arc { center, radius, start, sweep } => {
                let d = p - center;
                let mut rel = wrap_angle(d.y.atan2(d.x) - start);
                // Outside the angular range, measure towards the nearer end.
                if rel > sweep + 0.5 * (2.0 * PI - sweep) {
                    rel -= 2.0 * PI;
                }
                (radius * rel, d.norm() - radius)
            }
        }
    }
}

/// Closed footprint outline made of straight and circular segments.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub segments: Vec<Segment>,
    vertices: Vec<Vec2>,
}

fn shoelace(pts: &[Vec2]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        * 0.5
}

fn point_in_polygon(pts: &[Vec2], p: Vec2) -> bool {
    let n = pts.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (pts[i], pts[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn segments_cross(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let cross = |o: Vec2, a: Vec2, b: Vec2| (a - o).perp(&(b - o));
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0))
}

fn polygon_is_simple(pts: &[Vec2]) -> bool {
    let n = pts.len();
    for i in 0..n {
        for j in (i + 1)..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

impl Profile {
    pub fn new(vertices: &[[f64; 2]], arcs: &[ArcEdge]) -> Result<Self, SceneError> {
        if vertices.len() < 3 {
            return Err(SceneError::InvalidFootprint(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        let verts: Vec<Vec2> = vertices.iter().map(|v| Vec2::new(v[0], v[1])).collect();
        if verts.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(SceneError::InvalidFootprint("non-finite vertex".into()));
        }
        let n = verts.len();
        if (0..n).any(|i| (verts[(i + 1) % n] - verts[i]).norm() <= 1e-9) {
            return Err(SceneError::InvalidFootprint("repeated vertex".into()));
        }
        if shoelace(&verts) <= 0.0 {
            return Err(SceneError::NotCounterClockwise);
        }
        if !polygon_is_simple(&verts) {
            return Err(SceneError::SelfIntersecting);
        }
        let mut segments = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = (verts[i], verts[(i + 1) % n]);
            let arcs_here: Vec<&ArcEdge> = arcs.iter().filter(|arc| arc.edge == i).collect();
            match arcs_here.as_slice() {
                [] => segments.push(Segment::Line { a, b }),
                [arc] => {
                    if !(arc.sagitta > 0.0 && arc.sagitta.is_finite()) {
                        return Err(SceneError::InvalidFootprint(format!(
                            "arc on edge {i} needs a positive sagitta"
                        )));
                    }
                    let chord = (b - a).norm();
                    let s = arc.sagitta;
                    let radius = (chord * chord / 4.0 + s * s) / (2.0 * s);
                    let dir = (b - a) / chord;
                    let inward = Vec2::new(-dir.y, dir.x);
                    let center = (a + b) * 0.5 + inward * (radius - s);
                    let start = (a - center).y.atan2((a - center).x);
                    let sweep = 4.0 * (2.0 * s / chord).atan();
                    segments.push(Segment::Arc { center, radius, start, sweep });
                }
                _ => {
                    return Err(SceneError::InvalidFootprint(format!(
                        "edge {i} has more than one arc"
                    )))
                }
            }
        }
        if let Some(arc) = arcs.iter().find(|arc| arc.edge >= n) {
            return Err(SceneError::InvalidFootprint(format!(
                "arc references edge {} of {}",
                arc.edge, n
            )));
        }
        let profile = Profile { segments, vertices: verts };
        if !polygon_is_simple(&profile.to_polygon(256)) {
            return Err(SceneError::SelfIntersecting);
        }
        Ok(profile)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn contains(&self, p: Vec2) -> bool {
        if point_in_polygon(&self.vertices, p) {
            return true;
        }
        self.segments.iter().zip(0..).any(|(seg, i)| match seg {
            Segment::Arc { center, radius, .. } => {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % self.vertices.len()];
                let d = (b - a).normalize();
                let out = Vec2::new(d.y, -d.x);
                (p - center).norm() <= *radius && (p - a).dot(&out) > 0.0
            }
            Segment::Line { .. } => false,
        })
    }

    /// Index and distance of the nearest segment; ties go to the lower index.
    pub fn nearest_segment(&self, p: Vec2) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, seg) in self.segments.iter().enumerate() {
            let d = seg.distance(p);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Exact signed distance (negative inside).
    pub fn sdf(&self, p: Vec2) -> f64 {
        let d = self.nearest_segment(p).1;
        if self.contains(p) {
            -d
        } else {
            d
        }
    }

    pub fn area(&self) -> f64 {
        let mut area = shoelace(&self.vertices);
        for seg in &self.segments {
            if let Segment::Arc { radius, sweep, .. } = seg {
                area += 0.5 * radius * radius * (sweep - sweep.sin());
            }
        }
        area
    }

    pub fn perimeter(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    /// Polygonal approximation; arcs are split into pieces of at most
    /// `2π / arc_steps` radians.
    pub fn to_polygon(&self, arc_steps: usize) -> Vec<Vec2> {
        let mut out = Vec::new();
        for seg in &self.segments {
            match seg {
                Segment::Line { a, .. } => out.push(*a),
                Segment::Arc { sweep, .. } => {
                    let k = ((sweep / (2.0 * PI)) * arc_steps as f64).ceil().max(2.0) as usize;
                    let l = seg.length();
                    for j in 0..k {
                        out.push(seg.point_at(l * j as f64 / k as f64));
                    }
                }
            }
        }
        out
    }

    pub fn bounds(&self) -> (Vec2, Vec2) {
        let pts = self.to_polygon(512);
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for p in pts {
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        (lo, hi)
    }
}

// ---------------------------------------------------------------------------
// Primitives and CSG
// ---------------------------------------------------------------------------

/// Box with arbitrary rotation about the vertical axis.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientedBox {
    pub center: Vec3,
    pub half: Vec3,
    pub yaw: f64,
}

impl OrientedBox {
    pub fn axis_aligned(min: Vec3, max: Vec3) -> Self {
        OrientedBox { center: (min + max) * 0.5, half: (max - min) * 0.5, yaw: 0.0 }
    }

    fn to_local(&self, p: Vec3) -> Vec3 {
        let d = p - self.center;
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    pub fn sdf(&self, p: Vec3) -> f64 {
        let q = self.to_local(p).abs() - self.half;
        q.sup(&Vec3::zeros()).norm() + q.max().min(0.0)
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (s, c) = self.yaw.sin_cos();
        let mut out = [Vec3::zeros(); 8];
        for (i, corner) in out.iter_mut().enumerate() {
            let l = Vec3::new(
                if i & 1 == 0 { -self.half.x } else { self.half.x },
                if i & 2 == 0 { -self.half.y } else { self.half.y },
                if i & 4 == 0 { -self.half.z } else { self.half.z },
            );
            *corner = self.center + Vec3::new(c * l.x - s * l.y, s * l.x + c * l.y, l.z);
        }
        out
    }
}

/// Vertical extrusion of a profile between two heights.
#[derive(Clone, Debug, PartialEq)]
pub struct Extrusion {
    pub profile: Profile,
    pub z_min: f64,
    pub z_max: f64,
}

impl Extrusion {
    pub fn sdf(&self, p: Vec3) -> f64 {
        let d2 = self.profile.sdf(Vec2::new(p.x, p.y));
        let dz = (p.z - self.z_max).max(self.z_min - p.z);
        d2.max(dz).min(0.0) + Vec2::new(d2.max(0.0), dz.max(0.0)).norm()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    Sphere { center: Vec3, radius: f64 },
    Box(OrientedBox),
    Extrusion(Extrusion),
}

impl Primitive {
    pub fn sdf(&self, p: Vec3) -> f64 {
        match self {
            Primitive::Sphere { center, radius } => (p - center).norm() - radius,
            Primitive::Box(b) => b.sdf(p),
            Primitive::Extrusion(e) => e.sdf(p),
        }
    }

    fn bounds(&self) -> (Vec3, Vec3) {
        match self {
            Primitive::Sphere { center, radius } => {
                (center - Vec3::repeat(*radius), center + Vec3::repeat(*radius))
            }
            Primitive::Box(b) => {
                let mut lo = Vec3::repeat(f64::INFINITY);
                let mut hi = Vec3::repeat(f64::NEG_INFINITY);
                for c in b.corners() {
                    lo = lo.inf(&c);
                    hi = hi.sup(&c);
                }
                (lo, hi)
            }
            Primitive::Extrusion(e) => {
                let (lo, hi) = e.profile.bounds();
                (Vec3::new(lo.x, lo.y, e.z_min), Vec3::new(hi.x, hi.y, e.z_max))
            }
        }
    }
}

/// Per-facade labelled patches of an envelope.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FacadePatches {
    pub windows: Vec<FacadeRect>,
    pub doors: Vec<FacadeRect>,
}

/// Labelling of an extruded building body: side faces are Wall unless inside
/// a window/door patch or the roof band; the top cap is Roof and the
/// ground-contact cap is Background.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeLabels {
    pub roof_band_start: f64,
    pub facades: Vec<FacadePatches>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Labeling {
    Uniform(SemanticClass),
    Envelope(EnvelopeLabels),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneNode {
    pub primitive: Primitive,
    pub labeling: Labeling,
    /// Facade this node is attached to (balconies report their host facade).
    pub host_facade: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Csg {
    Leaf(usize),
    Union(Vec<Csg>),
    Intersection(Vec<Csg>),
    Difference(Box<Csg>, Box<Csg>),
}

impl Csg {
    fn eval(&self, nodes: &[SceneNode], p: Vec3) -> f64 {
        match self {
            Csg::Leaf(i) => nodes[*i].primitive.sdf(p),
            Csg::Union(children) => {
                children.iter().map(|c| c.eval(nodes, p)).fold(f64::INFINITY, f64::min)
            }
            Csg::Intersection(children) => {
                children.iter().map(|c| c.eval(nodes, p)).fold(f64::NEG_INFINITY, f64::max)
            }
            Csg::Difference(a, b) => a.eval(nodes, p).max(-b.eval(nodes, p)),
        }
    }

    fn leaves(&self, out: &mut Vec<usize>) {
        match self {
            Csg::Leaf(i) => out.push(*i),
            Csg::Union(c) | Csg::Intersection(c) => c.iter().for_each(|c| c.leaves(out)),
            Csg::Difference(a, b) => {
                a.leaves(out);
                b.leaves(out);
            }
        }
    }
}

/// Result of a surface label query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceTag {
    pub label: SemanticClass,
    pub facade: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticScene {
    pub nodes: Vec<SceneNode>,
    pub tree: Csg,
    pub bounds_min: Vec3,
    pub bounds_max: Vec3,
    pub center: Vec3,
    pub radius: f64,
    /// Points farther than this from the surface are labelled Background.
    pub label_band: f64,
    leaf_order: Vec<usize>,
}

impl AnalyticScene {
    /// Scene from explicit nodes; `tree` must only reference existing nodes.
    pub fn from_nodes(nodes: Vec<SceneNode>, tree: Csg) -> Self {
        let mut leaf_order = Vec::new();
        tree.leaves(&mut leaf_order);
        leaf_order.sort_unstable();
        leaf_order.dedup();
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &leaf_order {
            let (a, b) = nodes[i].primitive.bounds();
            lo = lo.inf(&a);
            hi = hi.sup(&b);
        }
        let center = (lo + hi) * 0.5;
        let radius = (hi - lo).norm() * 0.5;
        AnalyticScene {
            nodes,
            tree,
            bounds_min: lo,
            bounds_max: hi,
            center,
            radius,
            label_band: radius * 4.0 / 256.0,
            leaf_order,
        }
    }

    pub fn with_label_band(mut self, band: f64) -> Self {
        self.label_band = band;
        self
    }

    pub fn sdf(&self, p: Vec3) -> f64 {
        self.tree.eval(&self.nodes, p)
    }

    fn nearest_leaf(&self, p: Vec3) -> usize {
        let mut best = (self.leaf_order[0], f64::INFINITY);
        for &i in &self.leaf_order {
            let d = self.nodes[i].primitive.sdf(p).abs();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Label and facade of a near-surface point.
    pub fn tag(&self, p: Vec3) -> SurfaceTag {
        if self.sdf(p).abs() > self.label_band {
            return SurfaceTag { label: SemanticClass::Background, facade: None };
        }
        let node = &self.nodes[self.nearest_leaf(p)];
        match (&node.labeling, &node.primitive) {
            (Labeling::Envelope(env), Primitive::Extrusion(ext)) => env.tag(ext, p),
            (Labeling::Uniform(c), _) => SurfaceTag { label: *c, facade: node.host_facade },
            (Labeling::Envelope(_), _) => {
                SurfaceTag { label: SemanticClass::Wall, facade: node.host_facade }
            }
        }
    }

    pub fn label(&self, p: Vec3) -> SemanticClass {
        self.tag(p).label
    }

    /// Outward unit normal from central differences of the exact SDF.
    pub fn normal(&self, p: Vec3) -> Vec3 {
        let h = 1e-6 * self.radius.max(1e-3);
        let g = Vec3::new(
            self.sdf(p + Vec3::x() * h) - self.sdf(p - Vec3::x() * h),
            self.sdf(p + Vec3::y() * h) - self.sdf(p - Vec3::y() * h),
            self.sdf(p + Vec3::z() * h) - self.sdf(p - Vec3::z() * h),
        );
        let n = g.norm();
        if n > 0.0 {
            g / n
        } else {
            Vec3::z()
        }
    }
}

impl EnvelopeLabels {
    fn tag(&self, ext: &Extrusion, p: Vec3) -> SurfaceTag {
        let xy = Vec2::new(p.x, p.y);
        let d2 = ext.profile.sdf(xy);
        let up = p.z - ext.z_max;
        let down = ext.z_min - p.z;
        if d2 >= up.max(down) {
            let (facade, _) = ext.profile.nearest_segment(xy);
            let (s, _) = ext.profile.segments[facade].facade_coords(xy);
            let z = p.z - ext.z_min;
            let label = if z >= self.roof_band_start && self.roof_band_start < ext.z_max - ext.z_min {
                SemanticClass::Roof
            } else {
                let patches = &self.facades[facade];
                if patches.windows.iter().any(|r| r.contains(s, z)) {
                    SemanticClass::Window
                } else if patches.doors.iter().any(|r| r.contains(s, z)) {
                    SemanticClass::Door
                } else {
                    SemanticClass::Wall
                }
            };
            SurfaceTag { label, facade: Some(facade) }
        } else if up >= down {
            SurfaceTag { label: SemanticClass::Roof, facade: None }
        } else {
            SurfaceTag { label: SemanticClass::Background, facade: None }
        }
    }
}

// ---------------------------------------------------------------------------
// Spec validation and scene construction
// ---------------------------------------------------------------------------

impl WindowGrid {
    pub fn rects(&self, facade_length: f64, wall_top: f64) -> Vec<FacadeRect> {
        let floor_h = wall_top / self.rows as f64;
        let bay = facade_length / self.columns as f64;
        let mut out = Vec::with_capacity((self.rows * self.columns) as usize);
        for r in 0..self.rows {
            for c in 0..self.columns {
                let sc = (c as f64 + 0.5) * bay;
                let z0 = r as f64 * floor_h + self.sill;
                out.push(FacadeRect {
                    s0: sc - self.width * 0.5,
                    s1: sc + self.width * 0.5,
                    z0,
                    z1: z0 + self.height,
                });
            }
        }
        out
    }
}

/// Balcony slab geometry: the oriented box and the rectangle it covers on
/// its host facade.
fn balcony_geometry(seg: &Segment, b: &BalconySpec) -> (OrientedBox, FacadeRect) {
    let base = seg.point_at(b.center);
    let n = seg.outward_normal(b.center);
    let dir = Vec2::new(-n.y, n.x);
    let c = base + n * (b.depth * 0.5);
    let obox = OrientedBox {
        center: Vec3::new(c.x, c.y, b.bottom + b.thickness * 0.5),
        half: Vec3::new(b.width * 0.5, b.depth * 0.5, b.thickness * 0.5),
        yaw: dir.y.atan2(dir.x),
    };
    let rect = FacadeRect {
        s0: b.center - b.width * 0.5,
        s1: b.center + b.width * 0.5,
        z0: b.bottom,
        z1: b.bottom + b.thickness,
    };
    (obox, rect)
}

/// Validated, derived layout shared by the scene builder and ground truth.
struct Layout {
    profile: Profile,
    wall_top: f64,
    facades: Vec<FacadePatches>,
    balconies: Vec<(usize, OrientedBox, FacadeRect, BalconySpec)>,
}

fn positive(name: &str, v: f64) -> Result<(), SceneError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SceneError::InvalidDimension(format!("{name} must be positive, got {v}")))
    }
}

fn layout(spec: &BuildingSpec) -> Result<Layout, SceneError> {
    let profile = Profile::new(&spec.footprint, &spec.arcs)?;
    positive("height", spec.height)?;
    if spec.floors < 1 {
        return Err(SceneError::InvalidDimension("floors must be at least 1".into()));
    }
    if !(spec.roof_thickness >= 0.0 && spec.roof_thickness < spec.height) {
        return Err(SceneError::InvalidDimension(format!(
            "roof thickness {} must lie in [0, height)",
            spec.roof_thickness
        )));
    }
    let n = profile.segments.len();
    let rectilinear = spec.arcs.is_empty()
        && profile.vertices.iter().enumerate().all(|(i, a)| {
            let b = profile.vertices[(i + 1) % n];
            (a.x - b.x).abs() < 1e-12 || (a.y - b.y).abs() < 1e-12
        });
    match spec.kind {
        BuildingKind::Skyscraper if !(rectilinear && n == 4) => {
            return Err(SceneError::KindMismatch(
                "skyscraper footprint must be an axis-aligned rectangle".into(),
            ))
        }
        BuildingKind::LShaped if !(rectilinear && n == 6) => {
            return Err(SceneError::KindMismatch(
                "L-shaped footprint must be rectilinear with 6 vertices".into(),
            ))
        }
        BuildingKind::Curved if spec.arcs.is_empty() => {
            return Err(SceneError::KindMismatch("curved building needs an arc edge".into()))
        }
        BuildingKind::Balcony if spec.balconies.is_empty() => {
            return Err(SceneError::KindMismatch("balcony building needs balconies".into()))
        }
        _ => {}
    }

    let wall_top = spec.height - spec.roof_thickness;
    let check_facade = |facade: usize| {
        if facade < n {
            Ok(())
        } else {
            Err(SceneError::FacadeOutOfRange { facade, count: n })
        }
    };
    let mut facades = vec![FacadePatches::default(); n];
    let mut occupied: Vec<Vec<FacadeRect>> = vec![Vec::new(); n];
    let mut claim = |facade: usize, rect: FacadeRect, what: &str| -> Result<(), SceneError> {
        if let Some(other) = occupied[facade].iter().find(|o| o.overlaps(&rect)) {
            return Err(SceneError::PatchLayout {
                facade,
                detail: format!("{what} {rect:?} overlaps {other:?}"),
            });
        }
        occupied[facade].push(rect);
        Ok(())
    };

    for grid in &spec.windows {
        check_facade(grid.facade)?;
        if grid.rows == 0 || grid.columns == 0 {
            return Err(SceneError::PatchLayout {
                facade: grid.facade,
                detail: "window grid needs at least one row and column".into(),
            });
        }
        positive("window width", grid.width)?;
        positive("window height", grid.height)?;
        let length = profile.segments[grid.facade].length();
        let floor_h = wall_top / grid.rows as f64;
        let bay = length / grid.columns as f64;
        if grid.width >= bay {
            return Err(SceneError::PatchLayout {
                facade: grid.facade,
                detail: format!("window width {} leaves no margin in bay {bay}", grid.width),
            });
        }
        if grid.sill <= 0.0 || grid.sill + grid.height >= floor_h {
            return Err(SceneError::PatchLayout {
                facade: grid.facade,
                detail: format!(
                    "sill {} + window height {} must fit strictly inside floor height {floor_h}",
                    grid.sill, grid.height
                ),
            });
        }
        for rect in grid.rects(length, wall_top) {
            if !rect.strictly_inside(length, wall_top) {
                return Err(SceneError::PatchLayout {
                    facade: grid.facade,
                    detail: format!("window {rect:?} touches the facade edge"),
                });
            }
            claim(grid.facade, rect, "window")?;
            facades[grid.facade].windows.push(rect);
        }
    }

    for door in &spec.doors {
        check_facade(door.facade)?;
        positive("door width", door.width)?;
        positive("door height", door.height)?;
        let length = profile.segments[door.facade].length();
        let rect = FacadeRect {
            s0: door.center - door.width * 0.5,
            s1: door.center + door.width * 0.5,
            z0: 0.0,
            z1: door.height,
        };
        if rect.s0 <= 0.0 || rect.s1 >= length || rect.z1 >= wall_top {
            return Err(SceneError::PatchLayout {
                facade: door.facade,
                detail: format!("door {rect:?} does not fit the facade"),
            });
        }
        claim(door.facade, rect, "door")?;
        facades[door.facade].doors.push(rect);
    }

    let mut balconies = Vec::new();
    for b in &spec.balconies {
        check_facade(b.facade)?;
        positive("balcony width", b.width)?;
        positive("balcony depth", b.depth)?;
        positive("balcony thickness", b.thickness)?;
        let seg = &profile.segments[b.facade];
        if !matches!(seg, Segment::Line { .. }) {
            return Err(SceneError::PatchLayout {
                facade: b.facade,
                detail: "balconies are only supported on straight facades".into(),
            });
        }
        let (obox, rect) = balcony_geometry(seg, b);
        if !rect.strictly_inside(seg.length(), wall_top) {
            return Err(SceneError::PatchLayout {
                facade: b.facade,
                detail: format!("balcony {rect:?} does not fit the facade"),
            });
        }
        let corners = obox.corners();
        // The outer edge of the slab must stay clear of the building body.
        let outer: Vec<Vec2> = corners
            .iter()
            .map(|c| Vec2::new(c.x, c.y))
            .filter(|c| {
                let (_, off) = seg.facade_coords(*c);
                off > b.depth * 0.5
            })
            .collect();
        if outer.iter().any(|c| profile.sdf(*c) <= 0.0) {
            return Err(SceneError::PatchLayout {
                facade: b.facade,
                detail: "balcony intersects the building".into(),
            });
        }
        claim(b.facade, rect, "balcony")?;
        balconies.push((b.facade, obox, rect, *b));
    }
    for i in 0..balconies.len() {
        for j in (i + 1)..balconies.len() {
            let (a, b) = (&balconies[i].1, &balconies[j].1);
            let overlap = a.corners().iter().any(|c| b.sdf(*c) < -1e-12)
                || b.corners().iter().any(|c| a.sdf(*c) < -1e-12);
            if overlap {
                return Err(SceneError::PatchLayout {
                    facade: balconies[i].0,
                    detail: "balconies intersect each other".into(),
                });
            }
        }
    }

    Ok(Layout { profile, wall_top, facades, balconies })
}

impl BuildingSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        layout(self).map(|_| ())
    }

    pub fn profile(&self) -> Result<Profile, SceneError> {
        Profile::new(&self.footprint, &self.arcs)
    }
}

/// Builds the analytic scene of a building. Node 0 is the body; balconies
/// follow in spec order (which fixes label tie-breaking).
pub fn build_scene(spec: &BuildingSpec) -> Result<AnalyticScene, SceneError> {
    let Layout { profile, wall_top, facades, balconies } = layout(spec)?;
    let mut nodes = vec![SceneNode {
        primitive: Primitive::Extrusion(Extrusion { profile, z_min: 0.0, z_max: spec.height }),
        labeling: Labeling::Envelope(EnvelopeLabels { roof_band_start: wall_top, facades }),
        host_facade: None,
    }];
    for (facade, obox, _, _) in balconies {
        nodes.push(SceneNode {
            primitive: Primitive::Box(obox),
            labeling: Labeling::Uniform(SemanticClass::Wall),
            host_facade: Some(facade),
        });
    }
    let tree = if nodes.len() == 1 {
        Csg::Leaf(0)
    } else {
        Csg::Union((0..nodes.len()).map(Csg::Leaf).collect())
    };
    Ok(AnalyticScene::from_nodes(nodes, tree))
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacadeTruth {
    pub facade: usize,
    pub length: f64,
    pub height: f64,
    pub curved: bool,
    pub window_area: f64,
    pub wall_area: f64,
    pub wwr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub wwr: f64,
    pub window_area: f64,
    pub wall_area: f64,
    pub door_area: f64,
    pub footprint: Vec<[f64; 2]>,
    pub footprint_area: f64,
    pub height: f64,
    pub facades: Vec<FacadeTruth>,
}

/// Closed-form characteristics. Wall area excludes windows, doors, the roof
/// band and ground-contact faces, and includes exposed balcony faces.
pub fn ground_truth(spec: &BuildingSpec) -> Result<GroundTruth, SceneError> {
    let Layout { profile, wall_top, facades, balconies } = layout(spec)?;
    let mut per_facade: Vec<FacadeTruth> = profile
        .segments
        .iter()
        .zip(&facades)
        .enumerate()
        .map(|(i, (seg, patches))| {
            let window_area: f64 = patches.windows.iter().map(FacadeRect::area).sum();
            let door_area: f64 = patches.doors.iter().map(FacadeRect::area).sum();
            let gross = seg.length() * wall_top;
            let wall_area = gross - window_area - door_area;
            FacadeTruth {
                facade: i,
                length: seg.length(),
                height: wall_top,
                curved: matches!(seg, Segment::Arc { .. }),
                window_area,
                wall_area,
                wwr: window_area / wall_area,
            }
        })
        .collect();
    for (facade, _, rect, b) in &balconies {
        let exposed = 2.0 * b.width * b.depth + b.width * b.thickness + 2.0 * b.depth * b.thickness;
        let f = &mut per_facade[*facade];
        f.wall_area += exposed - rect.area();
        f.wwr = f.window_area / f.wall_area;
    }
    let window_area: f64 = per_facade.iter().map(|f| f.window_area).sum();
    let wall_area: f64 = per_facade.iter().map(|f| f.wall_area).sum();
    let door_area: f64 = facades.iter().flat_map(|f| &f.doors).map(FacadeRect::area).sum();
    Ok(GroundTruth {
        wwr: window_area / wall_area,
        window_area,
        wall_area,
        door_area,
        footprint: profile.to_polygon(1024).iter().map(|p| [p.x, p.y]).collect(),
        footprint_area: profile.area(),
        height: spec.height,
        facades: per_facade,
    })
}

// ---------------------------------------------------------------------------
// Procedural generator
// ---------------------------------------------------------------------------

/// Window grid reaching `wwr` on a facade of the given size, or `None` when
/// the facade is too short for a single bay.
fn grid_for_wwr(facade: usize, length: f64, wall_top: f64, rows: u32, wwr: f64) -> Option<WindowGrid> {
    let target_bay = 3.0;
    let columns = (length / target_bay).round().max(1.0) as u32;
    let bay = length / columns as f64;
    let floor_h = wall_top / rows as f64;
    // wwr = win / (facade - win)  =>  win fraction of facade = wwr / (1 + wwr)
    let k = (wwr / (1.0 + wwr)).sqrt();
    let width = bay * k;
    let height = floor_h * k;
    let sill = (floor_h - height) * 0.45;
    if bay < 0.5 {
        return None;
    }
    Some(WindowGrid { facade, rows, columns, width, height, sill })
}

impl BuildingSpec {
    /// Random building of the given kind, with floors, heights and WWR drawn
    /// from the ranges of typical synthetic datasets (4–22 floors, 10–46 m,
    /// WWR 0.10–0.41).
    pub fn generate(kind: BuildingKind, seed: u64) -> Self {
        use rand::Rng as _;
        let mut rng = crate::rng::seeded(seed, crate::rng::domain::GENERATOR);
        let floors: u32 = rng.gen_range(4..=22);
        let fh_lo = (10.0 / floors as f64).max(2.0);
        let fh_hi = (46.0 / floors as f64).min(3.5);
        let floor_h = rng.gen_range(fh_lo..=fh_hi.max(fh_lo));
        let roof_thickness = rng.gen_range(0.2..0.6);
        let height = floors as f64 * floor_h + roof_thickness;
        let wwr: f64 = rng.gen_range(0.10..0.41);
        let a: f64 = rng.gen_range(12.0..30.0);
        let b: f64 = rng.gen_range(10.0..24.0);
        let (footprint, arcs) = match kind {
            BuildingKind::Skyscraper | BuildingKind::Balcony => {
                (vec![[0.0, 0.0], [a, 0.0], [a, b], [0.0, b]], vec![])
            }
            BuildingKind::LShaped => {
                let ca = a * rng.gen_range(0.4..0.6);
                let cb = b * rng.gen_range(0.4..0.6);
                (
                    vec![[0.0, 0.0], [a, 0.0], [a, cb], [ca, cb], [ca, b], [0.0, b]],
                    vec![],
                )
            }
            BuildingKind::Curved => {
                let sag = b * rng.gen_range(0.15..0.5);
                (
                    vec![[0.0, 0.0], [a, 0.0], [a, b], [0.0, b]],
                    vec![ArcEdge { edge: 1, sagitta: sag }],
                )
            }
        };
        let mut spec = BuildingSpec {
            kind,
            footprint,
            arcs,
            height,
            floors,
            roof_thickness,
            windows: vec![],
            doors: vec![],
            balconies: vec![],
        };
        let profile = spec.profile().expect("generated footprint is valid");
        let wall_top = height - roof_thickness;
        spec.windows = profile
            .segments
            .iter()
            .enumerate()
            .filter_map(|(i, s)| grid_for_wwr(i, s.length(), wall_top, floors, wwr))
            .collect();
        if kind == BuildingKind::Balcony {
            // Balconies sit between window columns on the front facade, every
            // other floor, so they never overlap windows.
            let front = spec.windows.iter().find(|g| g.facade == 0).copied();
            if let Some(grid) = front {
                let bay = a / grid.columns as f64;
                let margin = (bay - grid.width) * 0.5;
                let width = bay.min(4.0) * 0.8;
                // Centre on a bay boundary when there are several columns,
                // otherwise put a narrow slab below the sill line.
                let (center, bottom_in_floor, thickness) = if grid.columns >= 2 {
                    (bay, 0.0, 0.25)
                } else {
                    (a * 0.5, grid.sill * 0.2, grid.sill * 0.5)
                };
                let width = if grid.columns >= 2 { (2.0 * margin).min(width) * 0.9 } else { width };
                for f in (1..floors).step_by(2) {
                    let bottom = f as f64 * floor_h + bottom_in_floor;
                    let thickness = if grid.columns >= 2 { thickness.min(floor_h * 0.3) } else { thickness };
                    spec.balconies.push(BalconySpec {
                        facade: 0,
                        center,
                        width,
                        depth: 1.2,
                        bottom: bottom.max(0.05),
                        thickness,
                    });
                }
            }
        }
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube() -> BuildingSpec {
        BuildingSpec {
            kind: BuildingKind::Skyscraper,
            footprint: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            arcs: vec![],
            height: 1.0,
            floors: 1,
            roof_thickness: 0.0,
            windows: vec![],
            doors: vec![],
            balconies: vec![],
        }
    }

    #[test]
    fn unit_cube_sdf_above_roof_centre() {
        let scene = build_scene(&unit_cube()).unwrap();
        assert!((scene.sdf(Vec3::new(0.5, 0.5, 2.5)) - 1.5).abs() < 1e-12);
        assert!((scene.sdf(Vec3::new(0.5, 0.5, 0.5)) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn box_and_union_examples() {
        let b = OrientedBox::axis_aligned(Vec3::repeat(-1.0), Vec3::repeat(1.0));
        assert_eq!(b.sdf(Vec3::new(2.0, 0.0, 0.0)), 1.0);
        assert_eq!(b.sdf(Vec3::zeros()), -1.0);
        let nodes = vec![
            SceneNode {
                primitive: Primitive::Box(OrientedBox::axis_aligned(
                    Vec3::new(-4.0, -1.0, -1.0),
                    Vec3::new(-2.0, 1.0, 1.0),
                )),
                labeling: Labeling::Uniform(SemanticClass::Wall),
                host_facade: None,
            },
            SceneNode {
                primitive: Primitive::Box(OrientedBox::axis_aligned(
                    Vec3::new(2.0, -1.0, -1.0),
                    Vec3::new(4.0, 1.0, 1.0),
                )),
                labeling: Labeling::Uniform(SemanticClass::Roof),
                host_facade: None,
            },
        ];
        let scene = AnalyticScene::from_nodes(nodes, Csg::Union(vec![Csg::Leaf(0), Csg::Leaf(1)]));
        // 3 m from both box centres, each box has half-extent 1.
        assert_eq!(scene.sdf(Vec3::zeros()), 2.0);
    }

    #[test]
    fn labels_of_window_roof_and_sky() {
        let mut spec = unit_cube();
        spec.windows.push(WindowGrid {
            facade: 0,
            rows: 1,
            columns: 1,
            width: 0.5,
            height: 0.5,
            sill: 0.25,
        });
        let scene = build_scene(&spec).unwrap();
        // Facade 0 runs from (0,0) to (1,0); the window centre is at s=0.5, z=0.5.
        assert_eq!(scene.label(Vec3::new(0.5, 0.0, 0.5)), SemanticClass::Window);
        assert_eq!(scene.label(Vec3::new(0.1, 0.0, 0.5)), SemanticClass::Wall);
        assert_eq!(scene.label(Vec3::new(0.5, 0.5, 1.0)), SemanticClass::Roof);
        assert_eq!(scene.label(Vec3::new(0.5, 0.5, 11.0)), SemanticClass::Background);
        assert_eq!(scene.tag(Vec3::new(0.5, 0.0, 0.5)).facade, Some(0));
        let gt = ground_truth(&spec).unwrap();
        assert!((gt.window_area - 0.25).abs() < 1e-12);
        assert!((gt.wall_area - 3.75).abs() < 1e-12);
        assert!((gt.wwr - 0.25 / 3.75).abs() < 1e-12);
    }

    #[test]
    fn windowless_building_has_zero_wwr() {
        let gt = ground_truth(&unit_cube()).unwrap();
        assert_eq!(gt.wwr, 0.0);
        assert!(gt.footprint_area > 0.0);
    }

    #[test]
    fn l_shaped_footprint_area() {
        let spec = BuildingSpec {
            kind: BuildingKind::LShaped,
            footprint: vec![[0.0, 0.0], [4.0, 0.0], [4.0, 2.0], [2.0, 2.0], [2.0, 3.0], [0.0, 3.0]],
            ..unit_cube()
        };
        let gt = ground_truth(&spec).unwrap();
        assert_eq!(spec.footprint.len(), 6);
        // 4x2 rectangle plus 2x3 rectangle minus their 2x2 overlap.
        assert!((gt.footprint_area - (8.0 + 6.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn semicircle_arc_geometry() {
        let p = Profile::new(
            &[[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]],
            &[ArcEdge { edge: 1, sagitta: 1.0 }],
        )
        .unwrap();
        let arc = &p.segments[1];
        assert!((arc.length() - PI).abs() < 1e-12);
        assert!((p.area() - (4.0 + PI / 2.0)).abs() < 1e-12);
        assert!(p.contains(Vec2::new(2.9, 1.0)));
        assert!(!p.contains(Vec2::new(3.1, 1.0)));
        assert!((p.sdf(Vec2::new(3.5, 1.0)) - 0.5).abs() < 1e-12);
        let (s, off) = arc.facade_coords(Vec2::new(3.0, 1.0));
        assert!((s - PI / 2.0).abs() < 1e-12 && off.abs() < 1e-12);
    }

    #[test]
    fn rejects_overlapping_and_edge_touching_windows() {
        let mut spec = unit_cube();
        spec.windows.push(WindowGrid { facade: 0, rows: 1, columns: 2, width: 0.5, height: 0.3, sill: 0.2 });
        assert!(matches!(build_scene(&spec), Err(SceneError::PatchLayout { facade: 0, .. })));
        spec.windows[0] = WindowGrid { facade: 0, rows: 1, columns: 1, width: 0.4, height: 0.8, sill: 0.2 };
        assert!(matches!(build_scene(&spec), Err(SceneError::PatchLayout { .. })));
        spec.windows[0] = WindowGrid { facade: 0, rows: 1, columns: 1, width: 0.4, height: 0.3, sill: 0.2 };
        spec.windows.push(spec.windows[0]);
        assert!(matches!(build_scene(&spec), Err(SceneError::PatchLayout { .. })));
        spec.windows.truncate(1);
        spec.windows[0].facade = 9;
        assert!(matches!(build_scene(&spec), Err(SceneError::FacadeOutOfRange { facade: 9, count: 4 })));
    }

    #[test]
    fn rejects_clockwise_and_self_intersecting_footprints() {
        let mut spec = unit_cube();
        spec.footprint.reverse();
        assert_eq!(build_scene(&spec).unwrap_err(), SceneError::NotCounterClockwise);
        let spec = BuildingSpec {
            kind: BuildingKind::Curved,
            footprint: vec![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0], [1.0, 1.0], [-1.0, 1.0]],
            ..unit_cube()
        };
        assert!(build_scene(&spec).is_err());
    }

    #[test]
    fn generator_produces_valid_specs_of_every_kind() {
        for kind in [BuildingKind::Skyscraper, BuildingKind::LShaped, BuildingKind::Curved, BuildingKind::Balcony] {
            for seed in 0..20 {
                let spec = BuildingSpec::generate(kind, seed);
                let gt = ground_truth(&spec).unwrap_or_else(|e| panic!("{kind:?} seed {seed}: {e}"));
                assert!((4..=22).contains(&spec.floors));
                assert!(spec.height >= 10.0 && spec.height <= 47.0, "height {}", spec.height);
                if kind != BuildingKind::Balcony {
                    assert!(gt.wwr > 0.09 && gt.wwr < 0.42, "{kind:?} wwr {}", gt.wwr);
                }
                assert_eq!(spec, BuildingSpec::generate(kind, seed));
            }
        }
    }

    #[test]
    fn class_ids_are_contiguous() {
        for (i, c) in SemanticClass::ALL.iter().enumerate() {
            assert_eq!(c.id() as usize, i);
            assert_eq!(SemanticClass::from_id(i as u8), Some(*c));
        }
        assert_eq!(SemanticClass::from_id(5), None);
    }
}
