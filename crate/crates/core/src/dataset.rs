//! On-disk datasets: rendered views, poses, spec, ground truth and a manifest
//! recording a SHA-256 hash of every file.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! manifest.json      file list, hashes, generator version and seed
//! spec.json          building spec
//! ground_truth.json  closed-form characteristics
//! poses.json         one pose record (pose + intrinsics) per view
//! views/NNN_*.ppm    colour
//! views/NNN_*.pgm    semantic labels and facade ids (id + 1, 0 for none)
//! views/NNN_*.pfm    along-ray depth (+inf on background)
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::camera::{look_at, project, sample_poses, CameraError, CameraPose, Intrinsics, PoseRecord, PoseSamplerConfig};
use crate::io::{self, ImageIoError};
use crate::render::{render_ground_truth, MultiModalImage, SemanticChannel};
use crate::scene::{build_scene, ground_truth, AnalyticScene, BuildingSpec, GroundTruth, SceneError};
use crate::{Vec2, Vec3};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
pub const GENERATOR: &str = concat!("bn3d ", env!("CARGO_PKG_VERSION"));

/// Azimuth offsets (degrees) of the natural views of a facade.
pub const MULTI_VIEW_OFFSETS: [f64; 5] = [-30.0, -15.0, 0.0, 15.0, 30.0];

/// Height of natural-view cameras above ground, as a fraction of the facade
/// height (street-level photographs look up at the facade).
pub const NATURAL_EYE_FRACTION: f64 = 0.15;

/// Margin kept free around a facade in facade views, as a fraction of the
/// image size.
pub const FACADE_MARGIN: f64 = 0.05;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error("hash mismatch for {file}: manifest {expected}, file {actual}")]
    HashMismatch { file: String, expected: String, actual: String },
    #[error("manifest: {0}")]
    Manifest(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum FacadeViews {
    None,
    Ideal,
    Multi,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ViewKind {
    /// Orbit view used for training.
    Training,
    /// Single perpendicular view of a facade.
    Ideal,
    /// Natural view at an azimuth offset from the facade normal.
    Multi { offset_deg: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub kind: ViewKind,
    /// Facade the view was taken of (facade views only).
    pub facade: Option<usize>,
    pub color: String,
    pub semantic: String,
    pub depth: String,
    pub facade_map: String,
    pub pose_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub generator: String,
    pub seed: u64,
    pub options: GenerateOptions,
    pub spec: String,
    pub ground_truth: String,
    pub poses: String,
    /// Intrinsics of the training views.
    pub intrinsics: Intrinsics,
    pub views: Vec<ViewEntry>,
    /// SHA-256 of every referenced file, keyed by relative path.
    pub files: BTreeMap<String, String>,
    /// SHA-256 over the sorted `path hash` lines of `files`.
    pub content_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub views: usize,
    pub image_size: u32,
    pub fov_deg: f64,
    pub seed: u64,
    /// Orbit radius of training cameras in scene bounding radii.
    pub radius_factor: f64,
    pub facade_views: FacadeViews,
    pub facade_image_size: u32,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            views: 20,
            image_size: 64,
            fov_deg: 50.0,
            seed: 0,
            radius_factor: 3.0,
            facade_views: FacadeViews::None,
            facade_image_size: 512,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn content_hash(files: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (path, hash) in files {
        h.update(format!("{path} {hash}\n"));
    }
    hex::encode(h.finalize())
}

// ---------------------------------------------------------------------------
// Facade views
// ---------------------------------------------------------------------------

/// Points spanning a facade (its outline, densely sampled along curved edges)
/// between the ground and `top`.
fn facade_outline(scene_spec: &BuildingSpec, facade: usize, top: f64) -> Result<Vec<Vec3>, SceneError> {
    let profile = scene_spec.profile()?;
    let seg = &profile.segments[facade];
    let n = 16;
    let mut pts = Vec::new();
    for i in 0..=n {
        let p: Vec2 = seg.point_at(seg.length() * i as f64 / n as f64);
        pts.push(Vec3::new(p.x, p.y, 0.0));
        pts.push(Vec3::new(p.x, p.y, top));
    }
    Ok(pts)
}

fn framed(pose: &CameraPose, k: &Intrinsics, pts: &[Vec3]) -> bool {
    let (mx, my) = (FACADE_MARGIN * k.width as f64, FACADE_MARGIN * k.height as f64);
    pts.iter().all(|&p| match project(pose, k, p) {
        Some([u, v]) => u >= mx && u <= k.width as f64 - mx && v >= my && v <= k.height as f64 - my,
        None => false,
    })
}

/// Camera looking at `target` from direction `dir` (unit, horizontal) at
/// eye height `eye`, at the smallest distance that frames every point.
fn framing_pose(target: Vec3, dir: Vec2, eye: f64, k: &Intrinsics, pts: &[Vec3]) -> Result<CameraPose, CameraError> {
    let at = |d: f64| look_at(target, Vec3::new(target.x + dir.x * d, target.y + dir.y * d, eye), Vec3::z());
    let extent = pts.iter().map(|p| (p - target).norm()).fold(0.0, f64::max).max(1e-6);
    let (mut lo, mut hi) = (extent * 0.1, extent);
    while !framed(&at(hi)?, k, pts) {
        lo = hi;
        hi *= 2.0;
        if hi > extent * 1e4 {
            return Err(CameraError::Degenerate("facade cannot be framed"));
        }
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if framed(&at(mid)?, k, pts) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    at(hi)
}

/// Facade views of every facade: one perpendicular view from mid-height and/or
/// natural views from street level at the fixed azimuth offsets.
pub fn facade_poses(
    spec: &BuildingSpec,
    truth: &GroundTruth,
    k: &Intrinsics,
    mode: FacadeViews,
) -> Result<Vec<(usize, ViewKind, CameraPose)>, DatasetError> {
    let profile = spec.profile()?;
    let mut out = Vec::new();
    for f in &truth.facades {
        let seg = &profile.segments[f.facade];
        let mid = seg.point_at(0.5 * f.length);
        let n = seg.outward_normal(0.5 * f.length);
        let target = Vec3::new(mid.x, mid.y, 0.5 * f.height);
        let pts = facade_outline(spec, f.facade, f.height)?;
        if matches!(mode, FacadeViews::Ideal | FacadeViews::Both) {
            out.push((f.facade, ViewKind::Ideal, framing_pose(target, n, target.z, k, &pts)?));
        }
        if matches!(mode, FacadeViews::Multi | FacadeViews::Both) {
            for off in MULTI_VIEW_OFFSETS {
                let a = off.to_radians();
                let dir = Vec2::new(n.x * a.cos() - n.y * a.sin(), n.x * a.sin() + n.y * a.cos());
                let eye = NATURAL_EYE_FRACTION * f.height;
                out.push((f.facade, ViewKind::Multi { offset_deg: off }, framing_pose(target, dir, eye, k, &pts)?));
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Everything a dataset holds, in memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub spec: BuildingSpec,
    pub truth: GroundTruth,
    pub views: Vec<View>,
}

#[derive(Clone, Debug)]
pub struct View {
    pub kind: ViewKind,
    pub facade: Option<usize>,
    pub pose: CameraPose,
    pub intrinsics: Intrinsics,
    pub image: MultiModalImage,
}

impl Dataset {
    /// Renders training views (and facade views on request) of a building.
    pub fn render(spec: &BuildingSpec, opts: &GenerateOptions) -> Result<Self, DatasetError> {
        let scene: AnalyticScene = build_scene(spec)?;
        let truth = ground_truth(spec)?;
        let k = Intrinsics::from_fov(opts.image_size, opts.image_size, opts.fov_deg);
        k.validate()?;
        let cfg = PoseSamplerConfig::new(k);
        let mut views = Vec::new();
        if opts.views > 0 {
            let poses = sample_poses(&scene, opts.views, scene.radius * opts.radius_factor, opts.seed, &cfg)?;
            for pose in poses {
                let image = render_ground_truth(&scene, &pose, &k);
                views.push(View { kind: ViewKind::Training, facade: None, pose, intrinsics: k, image });
            }
        }
        if opts.facade_views != FacadeViews::None {
            let kf = Intrinsics::from_fov(opts.facade_image_size, opts.facade_image_size, opts.fov_deg);
            kf.validate()?;
            for (facade, kind, pose) in facade_poses(spec, &truth, &kf, opts.facade_views)? {
                let image = render_ground_truth(&scene, &pose, &kf);
                views.push(View { kind, facade: Some(facade), pose, intrinsics: kf, image });
            }
        }
        Ok(Dataset { spec: spec.clone(), truth, views })
    }

    pub fn training_views(&self) -> impl Iterator<Item = &View> {
        self.views.iter().filter(|v| v.kind == ViewKind::Training)
    }

    pub fn facade_views(&self) -> impl Iterator<Item = &View> {
        self.views.iter().filter(|v| v.facade.is_some())
    }
}

fn view_stem(i: usize, kind: ViewKind, facade: Option<usize>) -> String {
    match (kind, facade) {
        (ViewKind::Training, _) => format!("{i:03}_train"),
        (ViewKind::Ideal, Some(f)) => format!("{i:03}_f{f}_ideal"),
        (ViewKind::Multi { offset_deg }, Some(f)) => format!("{i:03}_f{f}_multi{:+03}", offset_deg.round() as i64),
        _ => format!("{i:03}"),
    }
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s.into_bytes()
}

/// Renders a dataset and writes it under `root`.
pub fn generate(spec: &BuildingSpec, root: &Path, opts: &GenerateOptions) -> Result<DatasetManifest, DatasetError> {
    let data = Dataset::render(spec, opts)?;
    write_dataset(&data, root, opts)
}

pub fn write_dataset(data: &Dataset, root: &Path, opts: &GenerateOptions) -> Result<DatasetManifest, DatasetError> {
    std::fs::create_dir_all(root.join("views")).map_err(io_err(root))?;
    let mut files = BTreeMap::new();
    let mut put = |rel: String, bytes: Vec<u8>| -> Result<String, DatasetError> {
        let path = root.join(&rel);
        std::fs::write(&path, &bytes).map_err(io_err(&path))?;
        files.insert(rel.clone(), sha256_hex(&bytes));
        Ok(rel)
    };
    let spec = put("spec.json".into(), json_bytes(&data.spec))?;
    let gt = put("ground_truth.json".into(), json_bytes(&data.truth))?;
    let records: Vec<PoseRecord> = data.views.iter().map(|v| PoseRecord::new(&v.pose, &v.intrinsics)).collect();
    let poses = put("poses.json".into(), json_bytes(&records))?;
    let mut entries = Vec::new();
    for (i, v) in data.views.iter().enumerate() {
        let stem = format!("views/{}", view_stem(i, v.kind, v.facade));
        let (w, h) = (v.image.width, v.image.height);
        let img = &v.image;
        let rgb: Vec<[u8; 3]> = img.rgb.iter().map(|c| c.map(io::quantize)).collect();
        let facade_ids: Vec<u8> = img
            .facade
            .iter()
            .map(|&f| u8::try_from(f).map_err(|_| DatasetError::Manifest(format!("facade id {f} does not fit in 8 bits"))))
            .collect::<Result<_, _>>()?;
        entries.push(ViewEntry {
            kind: v.kind,
            facade: v.facade,
            color: put(format!("{stem}_color.ppm"), io::encode_ppm(w, h, &rgb))?,
            semantic: put(format!("{stem}_semantic.pgm"), io::encode_pgm(w, h, &img.label_ids()))?,
            depth: put(format!("{stem}_depth.pfm"), io::encode_pfm(w, h, &img.depth))?,
            facade_map: put(format!("{stem}_facade.pgm"), io::encode_pgm(w, h, &facade_ids))?,
            pose_index: i,
        });
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        generator: GENERATOR.to_string(),
        seed: opts.seed,
        options: opts.clone(),
        spec,
        ground_truth: gt,
        poses,
        intrinsics: Intrinsics::from_fov(opts.image_size, opts.image_size, opts.fov_deg),
        views: entries,
        content_hash: content_hash(&files),
        files,
    };
    let path = root.join(MANIFEST_FILE);
    std::fs::write(&path, json_bytes(&manifest)).map_err(io_err(&path))?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

/// Dataset directory for a path that is either the directory or its manifest.
pub fn dataset_root(path: &Path) -> PathBuf {
    if path.is_dir() || path.extension().map_or(true, |e| e != "json") {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let root = dataset_root(path);
    let file = root.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&file).map_err(io_err(&file))?;
    let m: DatasetManifest =
        serde_json::from_str(&text).map_err(|source| DatasetError::Json { path: file.display().to_string(), source })?;
    if m.version != MANIFEST_VERSION {
        return Err(DatasetError::Manifest(format!("unsupported manifest version {}", m.version)));
    }
    Ok(m)
}

/// Checks every recorded file hash and the content hash.
pub fn verify(root: &Path, m: &DatasetManifest) -> Result<(), DatasetError> {
    if content_hash(&m.files) != m.content_hash {
        return Err(DatasetError::HashMismatch {
            file: MANIFEST_FILE.into(),
            expected: m.content_hash.clone(),
            actual: content_hash(&m.files),
        });
    }
    for (rel, expected) in &m.files {
        let bytes = io::read_file(&root.join(rel))?;
        let actual = sha256_hex(&bytes);
        if &actual != expected {
            return Err(DatasetError::HashMismatch { file: rel.clone(), expected: expected.clone(), actual });
        }
    }
    let referenced = [&m.spec, &m.ground_truth, &m.poses]
        .into_iter()
        .chain(m.views.iter().flat_map(|v| [&v.color, &v.semantic, &v.depth, &v.facade_map]));
    for rel in referenced {
        if !m.files.contains_key(rel) {
            return Err(DatasetError::Manifest(format!("{rel} is referenced but has no recorded hash")));
        }
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(root: &Path, rel: &str) -> Result<T, DatasetError> {
    let path = root.join(rel);
    let bytes = io::read_file(&path)?;
    serde_json::from_slice(&bytes).map_err(|source| DatasetError::Json { path: path.display().to_string(), source })
}

/// Loads and verifies a dataset from its directory or manifest path.
pub fn load(path: &Path) -> Result<(DatasetManifest, Dataset), DatasetError> {
    let root = dataset_root(path);
    let m = read_manifest(path)?;
    verify(&root, &m)?;
    let spec: BuildingSpec = read_json(&root, &m.spec)?;
    let truth: GroundTruth = read_json(&root, &m.ground_truth)?;
    let records: Vec<PoseRecord> = read_json(&root, &m.poses)?;
    if records.len() != m.views.len() {
        return Err(DatasetError::Manifest(format!("{} poses for {} views", records.len(), m.views.len())));
    }
    let mut views = Vec::with_capacity(m.views.len());
    for e in &m.views {
        let rec = records
            .get(e.pose_index)
            .ok_or_else(|| DatasetError::Manifest(format!("pose index {} out of range", e.pose_index)))?;
        let k = rec.intrinsics;
        let (w, h, rgb) = io::decode_ppm(&io::read_file(&root.join(&e.color))?)?;
        let (_, _, labels) = io::decode_pgm(&io::read_file(&root.join(&e.semantic))?)?;
        let (_, _, depth) = io::decode_pfm(&io::read_file(&root.join(&e.depth))?)?;
        let (_, _, facade) = io::decode_pgm(&io::read_file(&root.join(&e.facade_map))?)?;
        let n = (w * h) as usize;
        if (w, h) != (k.width, k.height) || labels.len() != n || depth.len() != n || facade.len() != n {
            return Err(DatasetError::Manifest(format!("{}: image sizes disagree with the intrinsics", e.color)));
        }
        let image = MultiModalImage {
            width: w,
            height: h,
            rgb: rgb.iter().map(|c| c.map(|b| b as f32 / 255.0)).collect(),
            semantics: SemanticChannel::Labels(labels),
            valid: depth.iter().map(|d| d.is_finite()).collect(),
            accumulation: depth.iter().map(|d| if d.is_finite() { 1.0 } else { 0.0 }).collect(),
            depth,
            facade: facade.into_iter().map(u16::from).collect(),
        };
        views.push(View { kind: e.kind, facade: e.facade, pose: rec.pose(), intrinsics: k, image });
    }
    Ok((m, Dataset { spec, truth, views }))
}
