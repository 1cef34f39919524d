//! Losses, optimizer, learning-rate schedule and the training loop.
//!
//! All losses are sums over the rays of a batch. The eikonal term is the
//! per-ray mean of `(‖∇f‖ - 1)^2` over that ray's samples, summed over rays,
//! so that all three terms scale the same way with batch size.

use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{pixel_center, pixel_ray_unchecked, CameraPose, Intrinsics};
use crate::neural::{FieldNetwork, Frame, NetGrads, NetworkConfig, NeuralError, SampleGrads};
use crate::render::{near_far, neus_alpha_grad, softmax, stratified_samples, MultiModalImage, VolumeConfig};
use crate::Vec3;

pub const LAMBDA_EIKONAL: f64 = 0.1;
pub const LAMBDA_SEMANTIC: f64 = 0.5;
/// Probability floor inside the cross-entropy logarithm.
pub const EPS_PROB: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("target label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite update for parameter {0}")]
    NonFiniteUpdate(usize),
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("need at least 2 training views, got {0}")]
    TooFewViews(usize),
    #[error("checkpoint architecture {found} does not match {expected}")]
    ArchitectureMismatch { expected: String, found: String },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// `Σ_rays ‖rendered - target‖_1`.
pub fn color_loss(rendered: &[[f64; 3]], target: &[[f64; 3]]) -> Result<f64, TrainError> {
    if rendered.len() != target.len() {
        return Err(TrainError::LengthMismatch(rendered.len(), target.len()));
    }
    Ok(rendered.iter().zip(target).map(|(r, t)| (0..3).map(|k| (r[k] - t[k]).abs()).sum::<f64>()).sum())
}

/// `Σ (‖g‖ - 1)^2`.
pub fn eikonal_loss(gradients: &[Vec3]) -> f64 {
    gradients.iter().map(|g| (g.norm() - 1.0).powi(2)).sum()
}

/// Cross-entropy of softmaxed composited logits against label ids, summed
/// over rays.
pub fn semantic_loss(logits: &[Vec<f64>], targets: &[usize]) -> Result<f64, TrainError> {
    if logits.len() != targets.len() {
        return Err(TrainError::LengthMismatch(logits.len(), targets.len()));
    }
    let mut total = 0.0;
    for (l, &y) in logits.iter().zip(targets) {
        if y >= l.len() {
            return Err(TrainError::LabelOutOfRange { label: y, classes: l.len() });
        }
        total -= softmax(l)[y].max(EPS_PROB).ln();
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub color: f64,
    pub eikonal: f64,
    pub semantic: f64,
    pub total: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl LossBreakdown {
    pub fn new(color: f64, eikonal: f64, semantic: f64, lambda1: f64, lambda2: f64) -> Self {
        LossBreakdown { color, eikonal, semantic, total: color + lambda1 * eikonal + lambda2 * semantic, lambda1, lambda2 }
    }

    fn add(&mut self, o: &LossBreakdown) {
        self.color += o.color;
        self.eikonal += o.eikonal;
        self.semantic += o.semantic;
    }
}

/// Weights applied to the three loss terms when differentiating. The
/// defaults are `(1, λ1, λ2)`; gradient checks isolate single terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub color: f64,
    pub eikonal: f64,
    pub semantic: f64,
}

impl LossWeights {
    pub fn total(lambda1: f64, lambda2: f64) -> Self {
        LossWeights { color: 1.0, eikonal: lambda1, semantic: lambda2 }
    }
}

// ---------------------------------------------------------------------------
// Schedule and optimizer
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Adam { config, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One bias-corrected update. `scaled` lists `(index, multiplier)` pairs
    /// whose learning rate differs from `lr`. Parameters are left untouched
    /// if any update would be non-finite.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, scaled: &[(usize, f64)]) -> Result<(), TrainError> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(TrainError::LengthMismatch(params.len(), grads.len()));
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.t + 1;
        let bc1 = 1.0 - beta1.powi(t as i32);
        let bc2 = 1.0 - beta2.powi(t as i32);
        let mut m = self.m.clone();
        let mut v = self.v.clone();
        let mut next = params.to_vec();
        for i in 0..params.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            next[i] = params[i] - lr * mh / (vh.sqrt() + eps);
        }
        for &(i, k) in scaled {
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            next[i] = params[i] - k * lr * mh / (vh.sqrt() + eps);
        }
        if let Some(i) = next.iter().position(|p| !p.is_finite()) {
            return Err(TrainError::NonFiniteUpdate(i));
        }
        params.copy_from_slice(&next);
        self.m = m;
        self.v = v;
        self.t = t;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_rays: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub peak_lr: f64,
    pub floor_lr: f64,
    pub lambda_eikonal: f64,
    pub lambda_semantic: f64,
    pub seed: u64,
    /// Checkpoint cadence in steps.
    pub eval_every: usize,
    /// Metrics cadence in steps.
    pub log_every: usize,
    pub n_samples: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Learning-rate multiplier for the log inverse standard deviation.
    #[serde(default = "one")]
    pub inv_std_lr_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl TrainConfig {
    /// Full-scale schedule: 2048 rays, 5000 warmup steps, 5e-4 peak, 2.5e-5 floor.
    pub fn paper() -> Self {
        TrainConfig {
            batch_rays: 2048,
            iterations: 100_000,
            warmup: 5000,
            peak_lr: 5e-4,
            floor_lr: 2.5e-5,
            lambda_eikonal: LAMBDA_EIKONAL,
            lambda_semantic: LAMBDA_SEMANTIC,
            seed: 0,
            eval_every: 5000,
            log_every: 100,
            n_samples: 64,
            adam: AdamConfig::default(),
            inv_std_lr_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.warmup >= self.iterations {
            return bad("warmup must be shorter than the run");
        }
        if !(0.0 < self.floor_lr && self.floor_lr < self.peak_lr) {
            return bad("need 0 < floor lr < peak lr");
        }
        if self.batch_rays == 0 || self.n_samples < 2 {
            return bad("need at least one ray and two samples per ray");
        }
        Ok(())
    }
}

/// Linear warmup from 0 to the peak, then cosine decay to the floor.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    if step <= cfg.warmup {
        if cfg.warmup == 0 {
            return cfg.peak_lr;
        }
        return cfg.peak_lr * step as f64 / cfg.warmup as f64;
    }
    let span = (cfg.iterations - cfg.warmup) as f64;
    let progress = ((step - cfg.warmup) as f64 / span).min(1.0);
    cfg.floor_lr + (cfg.peak_lr - cfg.floor_lr) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Everything needed to reproduce a run: architecture, schedule, and dataset
/// rendering sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    pub views: usize,
    pub image_size: u32,
    pub fov_deg: f64,
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

impl Profile {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn desk() -> Self {
        Self::from_json(include_str!("../profiles/desk.json")).expect("bundled desk profile parses")
    }

    pub fn paper() -> Self {
        Self::from_json(include_str!("../profiles/paper.json")).expect("bundled paper profile parses")
    }
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

/// One supervised pixel, in the network frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainRay {
    pub origin: Vec3,
    pub direction: Vec3,
    pub color: [f64; 3],
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingData {
    pub rays: Vec<TrainRay>,
    pub views: usize,
}

impl TrainingData {
    /// Every pixel of every ground-truth view becomes a ray.
    pub fn from_views(views: &[(&MultiModalImage, &CameraPose, &Intrinsics)], frame: &Frame) -> Result<Self, TrainError> {
        if views.len() < 2 {
            return Err(TrainError::TooFewViews(views.len()));
        }
        let mut rays = Vec::new();
        for (img, pose, k) in views {
            let labels = img.label_ids();
            for i in 0..k.pixel_count() {
                let r = pixel_ray_unchecked(pose, k, pixel_center(k, i));
                let c = img.rgb[i];
                rays.push(TrainRay {
                    origin: frame.to_local(r.origin),
                    direction: r.direction,
                    color: [c[0] as f64, c[1] as f64, c[2] as f64],
                    label: labels[i],
                });
            }
        }
        Ok(TrainingData { rays, views: views.len() })
    }
}

/// Indices of the rays of batch `step`, uniform over all pixels.
pub fn batch_indices(n_rays: usize, batch: usize, seed: u64, step: usize) -> Vec<usize> {
    let mut rng = crate::rng::stream(seed, crate::rng::domain::BATCH, step as u64, 0);
    (0..batch).map(|_| rng.gen_range(0..n_rays)).collect()
}

// ---------------------------------------------------------------------------
// Batch loss and gradient
// ---------------------------------------------------------------------------

/// Rays per work item; fixed so results do not depend on the thread count.
const CHUNK_RAYS: usize = 32;

#[derive(Clone, Copy, Debug)]
pub struct BatchContext {
    pub n_samples: usize,
    pub weights: LossWeights,
    pub lambda1: f64,
    pub lambda2: f64,
    pub seed: u64,
    pub step: usize,
}

/// Volume configuration of `net` in its own normalized frame.
pub fn local_volume(net: &FieldNetwork, n_samples: usize) -> VolumeConfig {
    VolumeConfig::new(Vec3::zeros(), net.config.bound_radius, n_samples, net.inv_std())
}

/// Loss and parameter gradient for the given rays. `slots[i]` keys the
/// stratified jitter of ray `i`.
pub fn batch_loss_and_grad(
    net: &FieldNetwork,
    rays: &[TrainRay],
    ctx: &BatchContext,
) -> Result<(LossBreakdown, NetGrads), TrainError> {
    let parts: Vec<Result<(LossBreakdown, NetGrads), TrainError>> = rays
        .par_chunks(CHUNK_RAYS)
        .enumerate()
        .map(|(c, chunk)| chunk_loss_and_grad(net, chunk, c * CHUNK_RAYS, ctx))
        .collect();
    let mut loss = LossBreakdown::default();
    let mut grads = net.zero_grads();
    for p in parts {
        let (l, g) = p?;
        loss.add(&l);
        grads.add(&g);
    }
    Ok((LossBreakdown::new(loss.color, loss.eikonal, loss.semantic, ctx.lambda1, ctx.lambda2), grads))
}

fn chunk_loss_and_grad(
    net: &FieldNetwork,
    rays: &[TrainRay],
    first_slot: usize,
    ctx: &BatchContext,
) -> Result<(LossBreakdown, NetGrads), TrainError> {
    let n = ctx.n_samples;
    let vol = local_volume(net, n);
    let classes = net.config.num_classes;
    let bg = vol.background_color;
    let bgl = vol.background_logits(classes);
    let w = ctx.weights;

    let mut loss = LossBreakdown::default();
    let mut pts = Vec::new();
    let mut dirs = Vec::new();
    let mut hit_rays = Vec::new();
    for (i, r) in rays.iter().enumerate() {
        if r.label as usize >= classes {
            return Err(TrainError::LabelOutOfRange { label: r.label as usize, classes });
        }
        let ray = crate::camera::Ray { origin: r.origin, direction: r.direction };
        match near_far(&ray, &vol) {
            Some((near, far)) => {
                let mut rng = crate::rng::stream(ctx.seed, crate::rng::domain::JITTER, ctx.step as u64, (first_slot + i) as u64);
                let s = stratified_samples(&ray, near, far, n, || rng.gen::<f64>());
                pts.extend(s.points);
                dirs.extend(std::iter::repeat(r.direction).take(n));
                hit_rays.push(i);
            }
            None => {
                loss.color += (0..3).map(|k| (bg[k] - r.color[k]).abs()).sum::<f64>();
                loss.semantic -= softmax(&bgl)[r.label as usize].max(EPS_PROB).ln();
            }
        }
    }
    let mut grads = net.zero_grads();
    if hit_rays.is_empty() {
        return Ok((loss, grads));
    }
    let fwd = net.forward_samples(&pts, &dirs, true)?;
    let s = net.inv_std();
    let mut g = SampleGrads::zeros(pts.len(), classes);
    let mut d_s = 0.0;
    let mut alpha = vec![0.0; n];
    let mut d_f = vec![(0.0, 0.0); n];
    for (h, &ri) in hit_rays.iter().enumerate() {
        let r = &rays[ri];
        let o = h * n;
        let f = &fwd.sdf[o..o + n];
        let mut ds_ray = vec![0.0; n];
        for i in 0..n - 1 {
            let (a, da, db, dsv) = neus_alpha_grad(f[i], f[i + 1], s);
            alpha[i] = a;
            d_f[i] = (da, db);
            ds_ray[i] = dsv;
        }
        alpha[n - 1] = 0.0;
        d_f[n - 1] = (0.0, 0.0);
        ds_ray[n - 1] = 0.0;
        // Composite.
        let mut trans = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let mut t = 1.0;
        for i in 0..n {
            trans[i] = t;
            weights[i] = t * alpha[i];
            t *= 1.0 - alpha[i];
        }
        let acc: f64 = weights.iter().sum();
        let mut color = [0.0; 3];
        let mut logits = vec![0.0; classes];
        for i in 0..n {
            for k in 0..3 {
                color[k] += weights[i] * fwd.color[[o + i, k]];
            }
            for l in 0..classes {
                logits[l] += weights[i] * fwd.logits[[o + i, l]];
            }
        }
        for k in 0..3 {
            color[k] += (1.0 - acc) * bg[k];
        }
        for l in 0..classes {
            logits[l] += (1.0 - acc) * bgl[l];
        }
        // Losses and their gradients w.r.t. the composited outputs.
        let mut d_color = [0.0; 3];
        for k in 0..3 {
            let res = color[k] - r.color[k];
            loss.color += res.abs();
            d_color[k] = w.color * if res > 0.0 { 1.0 } else if res < 0.0 { -1.0 } else { 0.0 };
        }
        let probs = softmax(&logits);
        let y = r.label as usize;
        loss.semantic -= probs[y].max(EPS_PROB).ln();
        let mut d_logits = vec![0.0; classes];
        if probs[y] > EPS_PROB {
            for l in 0..classes {
                d_logits[l] = w.semantic * (probs[l] - if l == y { 1.0 } else { 0.0 });
            }
        }
        // d loss / d w_i, then through the transmittance product.
        let mut gw = vec![0.0; n];
        for i in 0..n {
            let mut v = 0.0;
            for k in 0..3 {
                v += d_color[k] * (fwd.color[[o + i, k]] - bg[k]);
                g.color[[o + i, k]] = weights[i] * d_color[k];
            }
            for l in 0..classes {
                v += d_logits[l] * (fwd.logits[[o + i, l]] - bgl[l]);
                g.logits[[o + i, l]] = weights[i] * d_logits[l];
            }
            gw[i] = v;
        }
        let mut suffix = 0.0;
        for i in (0..n).rev() {
            let d_alpha = trans[i] * (gw[i] - suffix);
            suffix = gw[i] * alpha[i] + (1.0 - alpha[i]) * suffix;
            let (da, db) = d_f[i];
            g.sdf[o + i] += d_alpha * da;
            if i + 1 < n {
                g.sdf[o + i + 1] += d_alpha * db;
            }
            d_s += d_alpha * ds_ray[i];
        }
        // Eikonal term over this ray's samples.
        for i in 0..n {
            let nv = Vec3::new(fwd.normal[[o + i, 0]], fwd.normal[[o + i, 1]], fwd.normal[[o + i, 2]]);
            let norm = nv.norm();
            let e = norm - 1.0;
            loss.eikonal += e * e / n as f64;
            if norm > 0.0 {
                let k = w.eikonal * 2.0 * e / (norm * n as f64);
                for a in 0..3 {
                    g.normal[[o + i, a]] += k * nv[a];
                }
            }
        }
    }
    net.backward_samples(&fwd, g, &mut grads);
    grads.rho += d_s * s;
    Ok((loss, grads))
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
    pub inv_std: f64,
    pub rays: usize,
    pub seconds: f64,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str = "step,lr,color,eikonal,semantic,total,seconds";

    /// Per-ray means of the summed losses.
    pub fn csv_row(&self) -> String {
        let r = self.rays.max(1) as f64;
        format!(
            "{},{:e},{:.6},{:.6},{:.6},{:.6},{:.3}",
            self.step,
            self.lr,
            self.loss.color / r,
            self.loss.eikonal / r,
            self.loss.semantic / r,
            self.loss.total / r,
            self.seconds
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub arch_hash: String,
    pub network: NetworkConfig,
    pub frame: Frame,
    pub fd_step: f64,
    pub train: TrainConfig,
    pub step: usize,
    pub params: Vec<f64>,
    pub adam: Adam,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(TrainError::Checkpoint(format!("unsupported version {}", c.version)));
        }
        let expected = c.network.arch_hash();
        if c.arch_hash != expected {
            return Err(TrainError::ArchitectureMismatch { expected, found: c.arch_hash });
        }
        if c.params.len() != c.network.param_count() || c.adam.m.len() != c.params.len() {
            return Err(TrainError::Checkpoint("parameter count does not match the architecture".into()));
        }
        Ok(c)
    }

    pub fn network(&self) -> Result<FieldNetwork, TrainError> {
        let mut net = FieldNetwork::new(self.network.clone(), self.frame, self.fd_step, 0);
        net.set_params(&self.params)?;
        Ok(net)
    }
}

pub struct Trainer {
    pub net: FieldNetwork,
    pub adam: Adam,
    pub config: TrainConfig,
    /// Number of completed steps.
    pub step: usize,
}

impl Trainer {
    pub fn new(net: FieldNetwork, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let adam = Adam::new(net.num_params(), config.adam);
        Ok(Trainer { net, adam, config, step: 0 })
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, TrainError> {
        c.train.validate()?;
        Ok(Trainer { net: c.network()?, adam: c.adam.clone(), config: c.train.clone(), step: c.step })
    }

    /// Resumes `c` under `network`, refusing a different architecture.
    pub fn resume(c: &Checkpoint, network: &NetworkConfig) -> Result<Self, TrainError> {
        if c.arch_hash != network.arch_hash() {
            return Err(TrainError::ArchitectureMismatch { expected: network.arch_hash(), found: c.arch_hash.clone() });
        }
        Self::from_checkpoint(c)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            arch_hash: self.net.config.arch_hash(),
            network: self.net.config.clone(),
            frame: self.net.frame,
            fd_step: self.net.fd_step,
            train: self.config.clone(),
            step: self.step,
            params: self.net.params(),
            adam: self.adam.clone(),
        }
    }

    pub fn context(&self, step: usize) -> BatchContext {
        let c = &self.config;
        BatchContext {
            n_samples: c.n_samples,
            weights: LossWeights::total(c.lambda_eikonal, c.lambda_semantic),
            lambda1: c.lambda_eikonal,
            lambda2: c.lambda_semantic,
            seed: c.seed,
            step,
        }
    }

    /// One optimizer step. On failure the trainer is left unchanged.
    pub fn step_once(&mut self, data: &TrainingData) -> Result<(LossBreakdown, f64), TrainError> {
        let step = self.step;
        let idx = batch_indices(data.rays.len(), self.config.batch_rays, self.config.seed, step);
        let rays: Vec<TrainRay> = idx.iter().map(|&i| data.rays[i]).collect();
        let (loss, grads) = batch_loss_and_grad(&self.net, &rays, &self.context(step))?;
        if !loss.total.is_finite() {
            return Err(TrainError::Diverged { step, detail: "loss is not finite".into() });
        }
        grads.check_finite().map_err(|e| TrainError::Diverged { step, detail: e.to_string() })?;
        let lr = lr_at(step + 1, &self.config);
        let mut params = self.net.params();
        let rho = params.len() - 1;
        self.adam
            .step(&mut params, &grads.to_vec(), lr, &[(rho, self.config.inv_std_lr_scale)])
            .map_err(|e| TrainError::Diverged { step, detail: e.to_string() })?;
        self.net.set_params(&params)?;
        self.step += 1;
        Ok((loss, lr))
    }

    /// Trains until `config.iterations`, calling `on_log` every `log_every`
    /// steps and `on_checkpoint` every `eval_every` steps and at the end.
    pub fn run(
        &mut self,
        data: &TrainingData,
        mut on_log: impl FnMut(&StepRecord),
        mut on_checkpoint: impl FnMut(&Trainer),
    ) -> Result<(), TrainError> {
        let start = Instant::now();
        while self.step < self.config.iterations {
            let (loss, lr) = self.step_once(data)?;
            let done = self.step;
            if done % self.config.log_every.max(1) == 0 || done == self.config.iterations || done == 1 {
                on_log(&StepRecord {
                    step: done,
                    lr,
                    loss,
                    inv_std: self.net.inv_std(),
                    rays: self.config.batch_rays,
                    seconds: start.elapsed().as_secs_f64(),
                });
            }
            if done % self.config.eval_every.max(1) == 0 || done == self.config.iterations {
                on_checkpoint(self);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_loss_examples() {
        assert_eq!(color_loss(&[[0.2, 0.3, 0.4]], &[[0.2, 0.3, 0.4]]).unwrap(), 0.0);
        let l = color_loss(&[[0.6, 0.3, 0.5]], &[[0.5, 0.5, 0.2]]).unwrap();
        assert!((l - 0.6).abs() < 1e-12);
        let r = [[0.1, 0.9, 0.4], [0.7, 0.2, 0.3]];
        let t = [[0.0, 1.0, 0.0], [0.5, 0.5, 0.5]];
        let once = color_loss(&r, &t).unwrap();
        let twice = color_loss(&[r, r].concat(), &[t, t].concat()).unwrap();
        assert_eq!(twice, 2.0 * once);
    }

    #[test]
    fn eikonal_examples() {
        assert_eq!(eikonal_loss(&[Vec3::x(), Vec3::new(0.6, 0.8, 0.0)]), 0.0);
        assert_eq!(eikonal_loss(&[Vec3::new(0.0, 2.0, 0.0)]), 1.0);
    }

    #[test]
    fn semantic_examples() {
        assert!(semantic_loss(&[vec![50.0, 0.0, 0.0, 0.0]], &[0]).unwrap() < 1e-20);
        let l = semantic_loss(&[vec![0.3; 4]], &[2]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        let l = semantic_loss(&[vec![0.0, 100.0, 0.0, 0.0]], &[0]).unwrap();
        assert!((l + EPS_PROB.ln()).abs() < 1e-12);
        assert!(matches!(semantic_loss(&[vec![0.0; 4]], &[4]), Err(TrainError::LabelOutOfRange { .. })));
    }

    #[test]
    fn schedule_values() {
        let c = TrainConfig::paper();
        assert_eq!(lr_at(0, &c), 0.0);
        assert_eq!(lr_at(5000, &c), 5e-4);
        assert_eq!(lr_at(c.iterations, &c), 2.5e-5);
        let mut prev = lr_at(c.warmup, &c);
        for s in (c.warmup..=c.iterations).step_by(997) {
            let v = lr_at(s, &c);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let mut a = Adam::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5];
        a.step(&mut p, &[0.3, -4.0, 0.0], 0.01, &[]).unwrap();
        let expect = |p0: f64, g: f64| p0 - 0.01 * g / (g.abs() + 1e-8);
        assert!((p[0] - expect(1.0, 0.3)).abs() < 1e-15);
        assert!((p[1] - expect(-2.0, -4.0)).abs() < 1e-15);
        assert_eq!(p[2], 0.5);

        let mut a = Adam::new(2, AdamConfig::default());
        a.m = vec![0.5, -0.5];
        a.v = vec![0.25, 0.25];
        a.t = 5;
        let mut q = vec![3.0, 4.0];
        a.step(&mut q, &[0.0, 0.0], 0.0, &[]).unwrap();
        assert_eq!(q, vec![3.0, 4.0]);
        assert_eq!(a.m, vec![0.45, -0.45]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::paper().validate().is_ok());
        let bad = TrainConfig { warmup: 200_000, ..TrainConfig::paper() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn bundled_profiles_parse() {
        let desk = Profile::desk();
        assert_eq!(desk.views, 20);
        assert_eq!(desk.image_size, 64);
        assert!(desk.train.validate().is_ok());
        let paper = Profile::paper();
        assert_eq!(paper.network, NetworkConfig::paper());
        assert_eq!(paper.train, TrainConfig::paper());
    }
}
