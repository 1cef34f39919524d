//! Pinhole cameras, look-at poses and iterative valid-pose sampling.
//!
//! Camera frame convention: x right, y down, z forward. A [`CameraPose`]
//! stores the world-from-camera rotation, so its columns are the right, down
//! and forward axes expressed in world coordinates.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::render::{sphere_trace, TraceConfig};
use crate::scene::AnalyticScene;
use crate::{Mat3, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("degenerate look-at: {0}")]
    Degenerate(&'static str),
    #[error("pixel ({u}, {v}) lies outside the {width}x{height} image")]
    PixelOutOfBounds { u: f64, v: f64, width: u32, height: u32 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("sampling radius {radius} must exceed the scene bounding radius {bound}")]
    RadiusTooSmall { radius: f64, bound: f64 },
    #[error("pose count must be at least 1")]
    NoPoses,
    #[error("gave up after {attempts} attempts with {accepted} of {requested} poses; most frequent failure: {constraint}")]
    Exhausted { attempts: usize, accepted: usize, requested: usize, constraint: PoseConstraint },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(width: u32, height: u32, focal: f64, cx: f64, cy: f64) -> Result<Self, CameraError> {
        let k = Intrinsics { width, height, focal, cx, cy };
        k.validate()?;
        Ok(k)
    }

    /// Centred principal point and the given horizontal field of view.
    pub fn from_fov(width: u32, height: u32, hfov_deg: f64) -> Self {
        let focal = 0.5 * width as f64 / (0.5 * hfov_deg.to_radians()).tan();
        Intrinsics { width, height, focal, cx: 0.5 * width as f64, cy: 0.5 * height as f64 }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::InvalidIntrinsics("empty image".into()));
        }
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return Err(CameraError::InvalidIntrinsics(format!("focal {} must be positive", self.focal)));
        }
        let inside = (0.0..=self.width as f64).contains(&self.cx) && (0.0..=self.height as f64).contains(&self.cy);
        if !inside {
            return Err(CameraError::InvalidIntrinsics("principal point outside the image".into()));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Horizontal and vertical half-angles of the field of view.
    pub fn half_fov(&self) -> (f64, f64) {
        ((0.5 * self.width as f64 / self.focal).atan(), (0.5 * self.height as f64 / self.focal).atan())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPose {
    pub position: Vec3,
    /// World-from-camera rotation.
    pub rotation: Mat3,
}

impl CameraPose {
    pub fn right(&self) -> Vec3 {
        self.rotation.column(0).into()
    }

    pub fn down(&self) -> Vec3 {
        self.rotation.column(1).into()
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation.column(2).into()
    }

    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.position)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Ray { origin, direction: direction.normalize() }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Pose at `position` whose forward axis points at `poi`, with the camera's
/// up direction as close to `up_hint` as possible.
pub fn look_at(poi: Vec3, position: Vec3, up_hint: Vec3) -> Result<CameraPose, CameraError> {
    let delta = poi - position;
    let dist = delta.norm();
    if !(dist > 1e-12) {
        return Err(CameraError::Degenerate("camera position coincides with the point of interest"));
    }
    let forward = delta / dist;
    let right = forward.cross(&up_hint);
    let rn = right.norm();
    if rn < 1e-9 * up_hint.norm().max(1e-300) {
        return Err(CameraError::Degenerate("viewing direction is parallel to the up hint"));
    }
    let right = right / rn;
    let down = forward.cross(&right);
    Ok(CameraPose { position, rotation: Mat3::from_columns(&[right, down, forward]) })
}

/// Ray through continuous image coordinates `pixel` (pixel centres sit at
/// half-integers).
pub fn pixel_ray(pose: &CameraPose, k: &Intrinsics, pixel: [f64; 2]) -> Result<Ray, CameraError> {
    let [u, v] = pixel;
    if !(u >= 0.0 && u <= k.width as f64 && v >= 0.0 && v <= k.height as f64) {
        return Err(CameraError::PixelOutOfBounds { u, v, width: k.width, height: k.height });
    }
    Ok(pixel_ray_unchecked(pose, k, pixel))
}

pub(crate) fn pixel_ray_unchecked(pose: &CameraPose, k: &Intrinsics, pixel: [f64; 2]) -> Ray {
    let d = Vec3::new((pixel[0] - k.cx) / k.focal, (pixel[1] - k.cy) / k.focal, 1.0);
    Ray { origin: pose.position, direction: (pose.rotation * d).normalize() }
}

/// Centre of pixel `index` in row-major order.
pub fn pixel_center(k: &Intrinsics, index: usize) -> [f64; 2] {
    let w = k.width as usize;
    [(index % w) as f64 + 0.5, (index / w) as f64 + 0.5]
}

/// Image coordinates of a world point, or `None` behind the camera.
pub fn project(pose: &CameraPose, k: &Intrinsics, p: Vec3) -> Option<[f64; 2]> {
    let c = pose.to_camera(p);
    if c.z <= 0.0 {
        return None;
    }
    Some([k.focal * c.x / c.z + k.cx, k.focal * c.y / c.z + k.cy])
}

// ---------------------------------------------------------------------------
// Pose file
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub position: [f64; 3],
    /// World-from-camera rotation, row-major.
    pub rotation: [f64; 9],
    pub intrinsics: Intrinsics,
}

impl PoseRecord {
    pub fn new(pose: &CameraPose, k: &Intrinsics) -> Self {
        let r = &pose.rotation;
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[i * 3 + j] = r[(i, j)];
            }
        }
        PoseRecord { position: pose.position.into(), rotation, intrinsics: *k }
    }

    pub fn pose(&self) -> CameraPose {
        CameraPose { position: Vec3::from(self.position), rotation: Mat3::from_row_slice(&self.rotation) }
    }
}

// ---------------------------------------------------------------------------
// Valid pose sampling
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoseConstraint {
    /// Building pixels touch the image border.
    Border,
    /// Building covers too little of the image.
    Coverage,
    /// Viewing direction too close to an accepted pose.
    Distinct,
}

impl std::fmt::Display for PoseConstraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PoseConstraint::Border => "building touches the image border",
            PoseConstraint::Coverage => "building coverage below minimum",
            PoseConstraint::Distinct => "pose not distinct from earlier poses",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSamplerConfig {
    pub intrinsics: Intrinsics,
    /// Elevation band in degrees above the horizon.
    pub elevation_deg: (f64, f64),
    pub border_px: u32,
    pub min_coverage: f64,
    /// Radius factor applied when the building touches the border.
    pub grow: f64,
    /// Radius factor applied when the building is too small in frame.
    pub shrink: f64,
    /// Failed adjustments before the elevation is re-drawn.
    pub adjustments_per_draw: u32,
    pub max_attempts: usize,
    /// Minimum angular separation as a fraction of the mean spacing of `n`
    /// uniform directions over the elevation band.
    pub separation_factor: f64,
}

impl PoseSamplerConfig {
    pub fn new(intrinsics: Intrinsics) -> Self {
        PoseSamplerConfig {
            intrinsics,
            elevation_deg: (5.0, 75.0),
            border_px: 2,
            min_coverage: 0.2,
            grow: 1.15,
            shrink: 0.9,
            adjustments_per_draw: 5,
            max_attempts: 20_000,
            separation_factor: 0.7,
        }
    }

    /// Minimum pairwise angular separation (radians) for `n` poses.
    pub fn min_separation(&self, n: usize) -> f64 {
        let (lo, hi) = (self.elevation_deg.0.to_radians(), self.elevation_deg.1.to_radians());
        let band = 2.0 * PI * (hi.sin() - lo.sin());
        self.separation_factor * (band / n as f64).sqrt()
    }
}

/// Checks the framing conditions of a pose on a rendered building mask.
pub fn check_framing(mask: &[bool], k: &Intrinsics, border_px: u32, min_coverage: f64) -> Result<(), PoseConstraint> {
    let (w, h) = (k.width as usize, k.height as usize);
    let b = border_px as usize;
    let mut covered = 0usize;
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        covered += 1;
        let (x, y) = (i % w, i / w);
        if x < b || y < b || x + b >= w || y + b >= h {
            return Err(PoseConstraint::Border);
        }
    }
    if (covered as f64) < min_coverage * (w * h) as f64 {
        return Err(PoseConstraint::Coverage);
    }
    Ok(())
}

/// Building mask (non-Background hits) seen from a pose.
pub fn building_mask(scene: &AnalyticScene, pose: &CameraPose, k: &Intrinsics) -> Vec<bool> {
    use rayon::prelude::*;
    let cfg = TraceConfig::for_scene(scene);
    (0..k.pixel_count())
        .into_par_iter()
        .map(|i| {
            let ray = pixel_ray_unchecked(pose, k, pixel_center(k, i));
            let hit = sphere_trace(scene, &ray, &cfg);
            hit.hit && hit.label != crate::SemanticClass::Background
        })
        .collect()
}

/// Samples `n` distinct poses on a sphere around the building centre whose
/// views frame the whole building.
pub fn sample_poses(
    scene: &AnalyticScene,
    n: usize,
    radius: f64,
    seed: u64,
    cfg: &PoseSamplerConfig,
) -> Result<Vec<CameraPose>, CameraError> {
    if n == 0 {
        return Err(CameraError::NoPoses);
    }
    if !(radius > scene.radius) {
        return Err(CameraError::RadiusTooSmall { radius, bound: scene.radius });
    }
    cfg.intrinsics.validate()?;
    let mut rng = crate::rng::seeded(seed, crate::rng::domain::POSES);
    let poi = scene.center;
    let min_sep = cfg.min_separation(n);
    let (el_lo, el_hi) = (cfg.elevation_deg.0.to_radians(), cfg.elevation_deg.1.to_radians());
    // Uniform over the band's area: sin(elevation) is uniform.
    let draw_elevation =
        |rng: &mut crate::rng::Rng| rng.gen_range(el_lo.sin()..=el_hi.sin()).asin();

    let mut poses: Vec<CameraPose> = Vec::with_capacity(n);
    let mut directions: Vec<Vec3> = Vec::with_capacity(n);
    let mut failures = [0usize; 3];
    let mut attempts = 0usize;
    while poses.len() < n {
        let mut azimuth = rng.gen_range(0.0..2.0 * PI);
        let mut elevation = draw_elevation(&mut rng);
        let mut r = radius;
        let mut adjustments = 0;
        loop {
            if attempts >= cfg.max_attempts {
                let worst = (0..3).max_by_key(|&i| (failures[i], std::cmp::Reverse(i))).unwrap();
                let constraint = [PoseConstraint::Border, PoseConstraint::Coverage, PoseConstraint::Distinct][worst];
                return Err(CameraError::Exhausted { attempts, accepted: poses.len(), requested: n, constraint });
            }
            attempts += 1;
            let dir = Vec3::new(elevation.cos() * azimuth.cos(), elevation.cos() * azimuth.sin(), elevation.sin());
            if directions.iter().any(|d| d.dot(&dir).clamp(-1.0, 1.0).acos() < min_sep) {
                failures[2] += 1;
                azimuth = rng.gen_range(0.0..2.0 * PI);
                elevation = draw_elevation(&mut rng);
                r = radius;
                adjustments = 0;
                continue;
            }
            let pose = look_at(poi, poi + dir * r, Vec3::z())?;
            let mask = building_mask(scene, &pose, &cfg.intrinsics);
            match check_framing(&mask, &cfg.intrinsics, cfg.border_px, cfg.min_coverage) {
                Ok(()) => {
                    poses.push(pose);
                    directions.push(dir);
                    break;
                }
                Err(c) => {
                    match c {
                        PoseConstraint::Border => {
                            failures[0] += 1;
                            r *= cfg.grow;
                        }
                        _ => {
                            failures[1] += 1;
                            r *= cfg.shrink;
                        }
                    }
                    adjustments += 1;
                    if adjustments >= cfg.adjustments_per_draw {
                        elevation = draw_elevation(&mut rng);
                        r = radius;
                        adjustments = 0;
                    }
                }
            }
        }
    }
    Ok(poses)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn look_at_examples() {
        let p = look_at(Vec3::zeros(), Vec3::new(0.0, 0.0, 5.0), Vec3::y()).unwrap();
        assert!((p.forward() - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
        let p = look_at(Vec3::zeros(), Vec3::new(5.0, 0.0, 0.0), Vec3::z()).unwrap();
        assert!((p.forward() - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!(close(p.rotation.determinant(), 1.0, 1e-12));
        assert_eq!(
            look_at(Vec3::zeros(), Vec3::zeros(), Vec3::z()).unwrap_err(),
            CameraError::Degenerate("camera position coincides with the point of interest")
        );
        assert!(look_at(Vec3::zeros(), Vec3::new(0.0, 0.0, 3.0), Vec3::z()).is_err());
    }

    #[test]
    fn principal_point_and_45_degree_rays() {
        let k = Intrinsics::new(64, 48, 40.0, 32.0, 24.0).unwrap();
        let pose = look_at(Vec3::zeros(), Vec3::new(0.0, -5.0, 1.0), Vec3::z()).unwrap();
        let r = pixel_ray(&pose, &k, [32.0, 24.0]).unwrap();
        assert!((r.direction - pose.forward()).norm() < 1e-12);
        assert_eq!(r.origin, pose.position);
        let r = pixel_ray(&pose, &k, [72.0, 24.0]);
        // 40 px right of the principal point is outside a 64 px image.
        assert!(matches!(r, Err(CameraError::PixelOutOfBounds { .. })));
        let k = Intrinsics::new(128, 48, 40.0, 32.0, 24.0).unwrap();
        let r = pixel_ray(&pose, &k, [72.0, 24.0]).unwrap();
        let angle = r.direction.dot(&pose.forward()).acos();
        assert!(close(angle, PI / 4.0, 1e-12));
        assert!(r.direction.dot(&pose.down()).abs() < 1e-12);
        assert!(r.direction.dot(&pose.right()) > 0.0);
    }

    #[test]
    fn corner_pixel_round_trips() {
        let k = Intrinsics::from_fov(64, 64, 50.0);
        let pose = look_at(Vec3::new(0.3, 0.1, 0.5), Vec3::new(3.0, -2.0, 2.0), Vec3::z()).unwrap();
        for px in [[0.0, 0.0], [64.0, 0.0], [0.0, 64.0], [64.0, 64.0], [0.5, 63.5]] {
            let ray = pixel_ray(&pose, &k, px).unwrap();
            let back = project(&pose, &k, ray.at(3.7)).unwrap();
            assert!((back[0] - px[0]).abs() < 1e-6 && (back[1] - px[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn pose_record_round_trip() {
        let k = Intrinsics::from_fov(32, 32, 60.0);
        let pose = look_at(Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0), Vec3::z()).unwrap();
        let rec = PoseRecord::new(&pose, &k);
        let json = serde_json::to_string(&rec).unwrap();
        let back: PoseRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.pose(), pose);
    }
}
