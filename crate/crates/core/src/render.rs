//! Renderers over a common [`Field`] interface.
//!
//! * [`sphere_trace`] / [`render_ground_truth`]: exact renderer for analytic
//!   scenes, producing color, label, depth and facade-id images.
//! * [`render_ray`]: SDF volume rendering with sigmoid-derived opacities
//!   (`alpha_i = max((Φs(f_i) - Φs(f_{i+1})) / Φs(f_i), 0)`), composited with
//!   `w_i = T_i alpha_i`, used for the neural field.
//!
//! Depth everywhere is distance along the (unit) ray, not camera z.

use rayon::prelude::*;

use crate::camera::{pixel_center, pixel_ray_unchecked, CameraPose, Intrinsics, Ray};
use crate::scene::{AnalyticScene, SemanticClass, BACKGROUND_COLOR};
use crate::Vec3;

/// Fixed directional light for ground-truth shading (unit, pointing at the light).
pub const LIGHT_DIR: [f64; 3] = [0.424_264_068_711_928_5, 0.282_842_712_474_619, 0.860_232_526_704_262_7];
const AMBIENT: f64 = 0.35;
const DIFFUSE: f64 = 0.65;

/// Logit magnitude the analytic field assigns to its own label.
pub const ANALYTIC_LOGIT: f64 = 10.0;

/// One evaluation of a field at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub sdf: f64,
    pub color: [f64; 3],
    pub logits: Vec<f64>,
}

/// Anything that can be rendered and measured: exact analytic scenes and
/// trained networks.
pub trait Field: Sync {
    fn num_classes(&self) -> usize;

    fn sdf(&self, x: Vec3) -> f64;

    /// Full evaluation (distance, view-dependent color, semantic logits).
    fn sample(&self, x: Vec3, view_dir: Vec3) -> FieldSample;

    fn semantic_logits(&self, x: Vec3) -> Vec<f64>;

    /// Central-difference step used by [`Field::gradient`].
    fn gradient_step(&self) -> f64;

    fn sdf_batch(&self, xs: &[Vec3]) -> Vec<f64> {
        xs.iter().map(|&x| self.sdf(x)).collect()
    }

    fn semantic_logits_batch(&self, xs: &[Vec3]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| self.semantic_logits(x)).collect()
    }

    fn sample_batch(&self, xs: &[Vec3], view_dir: Vec3) -> Vec<FieldSample> {
        xs.iter().map(|&x| self.sample(x, view_dir)).collect()
    }

    /// Inverse standard deviation (world units) the field was trained with,
    /// if any.
    fn volume_inv_std(&self) -> Option<f64> {
        None
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        let h = self.gradient_step();
        let d = |e: Vec3| (self.sdf(x + e * h) - self.sdf(x - e * h)) / (2.0 * h);
        Vec3::new(d(Vec3::x()), d(Vec3::y()), d(Vec3::z()))
    }
}

pub fn lambert(albedo: [f64; 3], normal: Vec3) -> [f64; 3] {
    let l = Vec3::from(LIGHT_DIR);
    let shade = AMBIENT + DIFFUSE * normal.dot(&l).max(0.0);
    albedo.map(|a| (a * shade).clamp(0.0, 1.0))
}

pub fn one_hot_logits(label: SemanticClass) -> Vec<f64> {
    let mut l = vec![0.0; SemanticClass::COUNT];
    l[label.id() as usize] = ANALYTIC_LOGIT;
    l
}

impl Field for AnalyticScene {
    fn num_classes(&self) -> usize {
        SemanticClass::COUNT
    }

    fn sdf(&self, x: Vec3) -> f64 {
        AnalyticScene::sdf(self, x)
    }

    fn sample(&self, x: Vec3, _view_dir: Vec3) -> FieldSample {
        let label = self.label(x);
        FieldSample {
            sdf: AnalyticScene::sdf(self, x),
            color: lambert(label.albedo(), self.normal(x)),
            logits: one_hot_logits(label),
        }
    }

    fn semantic_logits(&self, x: Vec3) -> Vec<f64> {
        one_hot_logits(self.label(x))
    }

    fn gradient_step(&self) -> f64 {
        1e-6 * self.radius.max(1e-3)
    }

    fn sdf_batch(&self, xs: &[Vec3]) -> Vec<f64> {
        xs.par_iter().map(|&x| AnalyticScene::sdf(self, x)).collect()
    }

    fn semantic_logits_batch(&self, xs: &[Vec3]) -> Vec<Vec<f64>> {
        xs.par_iter().map(|&x| one_hot_logits(self.label(x))).collect()
    }
}

// ---------------------------------------------------------------------------
// Sphere tracing
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceConfig {
    pub eps_hit: f64,
    /// Maximum marched distance after entering the bounding sphere.
    pub t_max: f64,
    pub max_steps: usize,
    pub bound_center: Vec3,
    pub bound_radius: f64,
}

impl TraceConfig {
    pub fn for_scene(scene: &AnalyticScene) -> Self {
        TraceConfig {
            eps_hit: 1e-4,
            t_max: 4.0 * scene.radius,
            max_steps: 256,
            bound_center: scene.center,
            bound_radius: scene.radius * 1.001,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceHit {
    pub hit: bool,
    pub t: f64,
    pub label: SemanticClass,
    pub facade: Option<usize>,
}

impl TraceHit {
    const MISS: TraceHit = TraceHit { hit: false, t: f64::INFINITY, label: SemanticClass::Background, facade: None };
}

/// Entry and exit distances of a ray through a sphere, clamped to `t >= 0`.
pub fn ray_sphere(ray: &Ray, center: Vec3, radius: f64) -> Option<(f64, f64)> {
    let oc = ray.origin - center;
    let b = oc.dot(&ray.direction);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let (t0, t1) = (-b - s, -b + s);
    if t1 <= 0.0 {
        return None;
    }
    Some((t0.max(0.0), t1))
}

/// Newton steps along the ray from a converged trace. Grazing rays stop up to
/// `eps / sin(angle)` short of the surface; this pulls them onto it.
fn refine_hit(scene: &AnalyticScene, ray: &Ray, mut t: f64, mut d: f64, eps: f64) -> f64 {
    let h = 0.1 * eps;
    for _ in 0..4 {
        let slope = (scene.sdf(ray.at(t + h)) - scene.sdf(ray.at(t - h))) / (2.0 * h);
        if slope > -1e-3 {
            break;
        }
        let next = t - d / slope;
        let dn = scene.sdf(ray.at(next));
        if !(dn.abs() < d.abs()) || (next - t).abs() > 1e3 * eps {
            break;
        }
        (t, d) = (next, dn);
    }
    t
}

pub fn sphere_trace(scene: &AnalyticScene, ray: &Ray, cfg: &TraceConfig) -> TraceHit {
    let Some((t_enter, t_exit)) = ray_sphere(ray, cfg.bound_center, cfg.bound_radius) else {
        return TraceHit::MISS;
    };
    let t_end = t_exit.min(t_enter + cfg.t_max);
    let mut t = t_enter;
    for _ in 0..cfg.max_steps {
        let p = ray.at(t);
        let d = scene.sdf(p);
        if d.abs() <= cfg.eps_hit {
            let t = refine_hit(scene, ray, t, d, cfg.eps_hit);
            let tag = scene.tag(ray.at(t));
            return TraceHit { hit: true, t, label: tag.label, facade: tag.facade };
        }
        t += d.abs();
        if t > t_end {
            break;
        }
    }
    TraceHit::MISS
}

/// Per-pixel semantic content of a [`MultiModalImage`].
#[derive(Clone, Debug, PartialEq)]
pub enum SemanticChannel {
    /// Ground-truth label id per pixel.
    Labels(Vec<u8>),
    /// Rendered class probabilities, `classes` values per pixel.
    Probabilities { classes: usize, data: Vec<f32> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiModalImage {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<[f32; 3]>,
    pub semantics: SemanticChannel,
    /// Along-ray distance; +inf where nothing was hit.
    pub depth: Vec<f32>,
    pub valid: Vec<bool>,
    /// Facade index + 1 of the surface seen at each pixel (0: none). Only the
    /// ground-truth renderer fills this.
    pub facade: Vec<u16>,
    /// Accumulated opacity (1 for ground truth hits).
    pub accumulation: Vec<f32>,
}

impl MultiModalImage {
    pub fn labels(&self) -> Option<&[u8]> {
        match &self.semantics {
            SemanticChannel::Labels(l) => Some(l),
            SemanticChannel::Probabilities { .. } => None,
        }
    }

    /// Argmax labels for rendered images, stored labels for ground truth.
    pub fn label_ids(&self) -> Vec<u8> {
        match &self.semantics {
            SemanticChannel::Labels(l) => l.clone(),
            SemanticChannel::Probabilities { classes, data } => data
                .chunks(*classes)
                .map(|p| {
                    let mut best = 0;
                    for (i, &v) in p.iter().enumerate() {
                        if v > p[best] {
                            best = i;
                        }
                    }
                    best as u8
                })
                .collect(),
        }
    }
}

/// Exact multi-modal render of an analytic scene through pixel centres.
pub fn render_ground_truth(scene: &AnalyticScene, pose: &CameraPose, k: &Intrinsics) -> MultiModalImage {
    let cfg = TraceConfig::for_scene(scene);
    let bg = BACKGROUND_COLOR.map(|c| c as f32);
    let pixels: Vec<([f32; 3], u8, f32, u16)> = (0..k.pixel_count())
        .into_par_iter()
        .map(|i| {
            let ray = pixel_ray_unchecked(pose, k, pixel_center(k, i));
            let hit = sphere_trace(scene, &ray, &cfg);
            if !hit.hit {
                return (bg, SemanticClass::Background.id(), f32::INFINITY, 0);
            }
            let p = ray.at(hit.t);
            let color = lambert(hit.label.albedo(), scene.normal(p)).map(|c| c as f32);
            let facade = hit.facade.map_or(0, |f| f as u16 + 1);
            (color, hit.label.id(), hit.t as f32, facade)
        })
        .collect();
    MultiModalImage {
        width: k.width,
        height: k.height,
        rgb: pixels.iter().map(|p| p.0).collect(),
        semantics: SemanticChannel::Labels(pixels.iter().map(|p| p.1).collect()),
        depth: pixels.iter().map(|p| p.2).collect(),
        valid: pixels.iter().map(|p| p.2.is_finite()).collect(),
        facade: pixels.iter().map(|p| p.3).collect(),
        accumulation: pixels.iter().map(|p| if p.2.is_finite() { 1.0 } else { 0.0 }).collect(),
    }
}

// ---------------------------------------------------------------------------
// Volume rendering
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub ray: Ray,
    pub t: Vec<f64>,
    pub points: Vec<Vec3>,
}

/// One draw per stratum of `[near, far]`; `jitter` must return values in `[0, 1)`.
pub fn stratified_samples(ray: &Ray, near: f64, far: f64, n: usize, mut jitter: impl FnMut() -> f64) -> RaySamples {
    assert!(near > 0.0 && far > near, "need 0 < near < far (got {near}, {far})");
    let step = (far - near) / n as f64;
    let t: Vec<f64> = (0..n).map(|i| near + (i as f64 + jitter()) * step).collect();
    let points = t.iter().map(|&t| ray.at(t)).collect();
    RaySamples { ray: *ray, t, points }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Lower bound on the opacity denominator.
pub const ALPHA_DEN_EPS: f64 = 1e-12;

/// Opacity of the interval between consecutive samples with distances
/// `f_i` and `f_next`.
pub fn neus_alpha(f_i: f64, f_next: f64, s: f64) -> f64 {
    let p = sigmoid(s * f_i);
    let n = sigmoid(s * f_next);
    ((p - n) / p.max(ALPHA_DEN_EPS)).max(0.0)
}

/// [`neus_alpha`] and its partial derivatives with respect to `f_i`,
/// `f_next` and `s` (zero where the clamp is active).
pub fn neus_alpha_grad(f_i: f64, f_next: f64, s: f64) -> (f64, f64, f64, f64) {
    let p = sigmoid(s * f_i);
    let q = sigmoid(s * f_next);
    let den = p.max(ALPHA_DEN_EPS);
    let alpha = (p - q) / den;
    if alpha <= 0.0 {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let d_p = if p >= ALPHA_DEN_EPS { q / (p * p) } else { 1.0 / den };
    let d_q = -1.0 / den;
    let (dp_dx, dq_dx) = (p * (1.0 - p), q * (1.0 - q));
    (alpha, d_p * dp_dx * s, d_q * dq_dx * s, d_p * dp_dx * f_i + d_q * dq_dx * f_next)
}

/// `w_i = T_i alpha_i` with `T_i = prod_{j<i} (1 - alpha_j)`.
pub fn compositing_weights(alphas: &[f64]) -> Vec<f64> {
    let mut trans = 1.0;
    alphas
        .iter()
        .map(|&a| {
            let w = trans * a;
            trans *= 1.0 - a;
            w
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Composited {
    pub value: Vec<f64>,
    pub weights: Vec<f64>,
    pub accumulation: f64,
    /// `sum w_i t_i`
    pub depth: f64,
}

/// Composites `values` (one row of `dim` entries per sample) with the given
/// opacities. `t` may be empty, in which case depth is 0.
pub fn composite(values: &[f64], dim: usize, alphas: &[f64], t: &[f64]) -> Composited {
    assert_eq!(values.len(), dim * alphas.len());
    let weights = compositing_weights(alphas);
    let mut value = vec![0.0; dim];
    for (w, row) in weights.iter().zip(values.chunks(dim)) {
        for (acc, v) in value.iter_mut().zip(row) {
            *acc += w * v;
        }
    }
    let depth = weights.iter().zip(t).map(|(w, t)| w * t).sum();
    Composited { accumulation: weights.iter().sum(), value, weights, depth }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct VolumeConfig {
    pub n_samples: usize,
    /// Inverse standard deviation `s` of the sigmoid.
    pub inv_std: f64,
    pub bound_center: Vec3,
    pub bound_radius: f64,
    pub background_color: [f64; 3],
    /// Logit given to the Background class for the transmittance left over
    /// at the end of a ray.
    pub background_logit: f64,
    pub background_class: usize,
}

impl VolumeConfig {
    pub fn new(bound_center: Vec3, bound_radius: f64, n_samples: usize, inv_std: f64) -> Self {
        VolumeConfig {
            n_samples,
            inv_std,
            bound_center,
            bound_radius,
            background_color: BACKGROUND_COLOR,
            background_logit: ANALYTIC_LOGIT,
            background_class: SemanticClass::Background.id() as usize,
        }
    }

    pub fn background_logits(&self, classes: usize) -> Vec<f64> {
        let mut l = vec![0.0; classes];
        l[self.background_class] = self.background_logit;
        l
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RayOutput {
    pub color: [f64; 3],
    /// Composited logits including the background term.
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub depth: f64,
    pub accumulation: f64,
    pub weights: Vec<f64>,
}

/// Near/far for a ray: its chord through the bounding sphere, or `None`.
pub fn near_far(ray: &Ray, cfg: &VolumeConfig) -> Option<(f64, f64)> {
    let (t0, t1) = ray_sphere(ray, cfg.bound_center, cfg.bound_radius)?;
    let near = t0.max(1e-4 * cfg.bound_radius);
    (t1 > near).then_some((near, t1))
}

/// Accumulation-weighted blend with the constant background.
pub fn finish(color: [f64; 3], logits: &[f64], accumulation: f64, cfg: &VolumeConfig) -> ([f64; 3], Vec<f64>) {
    let rest = 1.0 - accumulation;
    let c = [0, 1, 2].map(|i| color[i] + rest * cfg.background_color[i]);
    let mut l = logits.to_vec();
    l[cfg.background_class] += rest * cfg.background_logit;
    (c, l)
}

/// Volume-renders one ray. Color and logits share the same weights; softmax
/// is applied to the composited logits.
pub fn render_ray<F: Field + ?Sized>(field: &F, ray: &Ray, cfg: &VolumeConfig, jitter: impl FnMut() -> f64) -> RayOutput {
    let classes = field.num_classes();
    let Some((near, far)) = near_far(ray, cfg) else {
        let (color, logits) = finish([0.0; 3], &vec![0.0; classes], 0.0, cfg);
        let probabilities = softmax(&logits);
        return RayOutput { color, logits, probabilities, depth: 0.0, accumulation: 0.0, weights: vec![] };
    };
    let samples = stratified_samples(ray, near, far, cfg.n_samples, jitter);
    let evals = field.sample_batch(&samples.points, ray.direction);
    let n = evals.len();
    let mut alphas: Vec<f64> = (0..n - 1).map(|i| neus_alpha(evals[i].sdf, evals[i + 1].sdf, cfg.inv_std)).collect();
    alphas.push(0.0);
    let mut values = Vec::with_capacity(n * (3 + classes));
    for e in &evals {
        values.extend_from_slice(&e.color);
        values.extend_from_slice(&e.logits);
    }
    let c = composite(&values, 3 + classes, &alphas, &samples.t);
    let (color, logits) = finish([c.value[0], c.value[1], c.value[2]], &c.value[3..], c.accumulation, cfg);
    let probabilities = softmax(&logits);
    RayOutput { color, logits, probabilities, depth: c.depth, accumulation: c.accumulation, weights: c.weights }
}

/// Volume-renders a full image (deterministic per pixel; `seed` keys the
/// stratified jitter of each pixel by `(image_id, pixel)`).
pub fn render_image<F: Field + ?Sized>(
    field: &F,
    pose: &CameraPose,
    k: &Intrinsics,
    cfg: &VolumeConfig,
    seed: u64,
    image_id: u64,
) -> MultiModalImage {
    use rand::Rng as _;
    let classes = field.num_classes();
    let outs: Vec<RayOutput> = (0..k.pixel_count())
        .into_par_iter()
        .map(|i| {
            let ray = pixel_ray_unchecked(pose, k, pixel_center(k, i));
            let mut rng = crate::rng::stream(seed, crate::rng::domain::JITTER, image_id, i as u64);
            render_ray(field, &ray, cfg, || rng.gen::<f64>())
        })
        .collect();
    MultiModalImage {
        width: k.width,
        height: k.height,
        rgb: outs.iter().map(|o| o.color.map(|c| c as f32)).collect(),
        semantics: SemanticChannel::Probabilities {
            classes,
            data: outs.iter().flat_map(|o| o.probabilities.iter().map(|&p| p as f32)).collect(),
        },
        depth: outs
            .iter()
            .map(|o| if o.accumulation > 0.5 { (o.depth / o.accumulation) as f32 } else { f32::INFINITY })
            .collect(),
        valid: outs.iter().map(|o| o.accumulation > 0.5).collect(),
        facade: vec![0; k.pixel_count()],
        accumulation: outs.iter().map(|o| o.accumulation as f32).collect(),
    }
}
