//! The trainable semantic SDF field.
//!
//! Three MLPs share one geometric trunk:
//!
//! * SDF trunk: `enc(x) -> [f, feature]`, smooth (softplus) activations;
//! * color head: `[x, enc(v), n, feature] -> rgb`, sigmoid output;
//! * semantic head: `feature -> logits`, view independent by construction.
//!
//! Networks work in a normalized frame (`Frame`) in which the building's
//! bounding sphere has unit radius. The spatial gradient `n = ∇f` is a
//! central difference over six extra trunk evaluations, so parameter
//! gradients only ever need first-order reverse mode through plain MLPs.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::render::{Field, FieldSample};
use crate::scene::{AnalyticScene, SemanticClass};
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("non-finite value in {network} layer {layer}")]
    NonFinite { network: &'static str, layer: usize },
    #[error("non-finite gradient in parameter block {0}")]
    NonFiniteGradient(String),
    #[error("sphere bias must be positive (got {0})")]
    InvalidBias(f64),
    #[error("sphere initialization did not converge: mean error {mean_error:.4} > {tolerance:.4}")]
    SphereInit { mean_error: f64, tolerance: f64 },
    #[error("parameter vector has length {got}, network expects {expected}")]
    ParamLength { got: usize, expected: usize },
}

// ---------------------------------------------------------------------------
// Positional encoding
// ---------------------------------------------------------------------------

pub fn encoded_len(dim: usize, freqs: usize) -> usize {
    dim * (1 + 2 * freqs)
}

/// Appends `(x, sin(2^0 πx), cos(2^0 πx), ..., sin(2^{F-1} πx), cos(2^{F-1} πx))`
/// to `out`; each sin/cos block is `x.len()` wide.
pub fn positional_encode(x: &[f64], freqs: usize, out: &mut Vec<f64>) {
    out.extend_from_slice(x);
    let mut scale = std::f64::consts::PI;
    for _ in 0..freqs {
        out.extend(x.iter().map(|v| (scale * v).sin()));
        out.extend(x.iter().map(|v| (scale * v).cos()));
        scale *= 2.0;
    }
}

fn encode_into(row: &mut [f64], x: &[f64], freqs: usize) {
    let d = x.len();
    row[..d].copy_from_slice(x);
    let mut scale = std::f64::consts::PI;
    for k in 0..freqs {
        let base = d * (1 + 2 * k);
        for j in 0..d {
            let (s, c) = (scale * x[j]).sin_cos();
            row[base + j] = s;
            row[base + d + j] = c;
        }
        scale *= 2.0;
    }
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Softplus { beta: f64 },
    /// C¹ rectifier: `0` below `-width`, `z` above `width`, and the quadratic
    /// `(z + width)^2 / (4 width)` in between. Much cheaper than softplus.
    SmoothRelu { width: f64 },
    Sigmoid,
}

impl Activation {
    /// Applies the activation in place and returns its elementwise
    /// derivative (`None` for the identity).
    fn apply(self, z: &mut Array2<f64>) -> Option<Array2<f64>> {
        match self {
            Activation::Identity => None,
            Activation::Relu => {
                let mut d = Array2::zeros(z.raw_dim());
                Zip::from(z).and(&mut d).for_each(|z, d| {
                    if *z > 0.0 {
                        *d = 1.0;
                    } else {
                        *z = 0.0;
                    }
                });
                Some(d)
            }
            Activation::Softplus { beta } => {
                let mut d = Array2::zeros(z.raw_dim());
                Zip::from(z).and(&mut d).for_each(|z, d| {
                    let t = beta * *z;
                    let e = (-t.abs()).exp();
                    *d = if t >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
                    *z = z.max(0.0) + e.ln_1p() / beta;
                });
                Some(d)
            }
            Activation::SmoothRelu { width } => {
                let mut d = Array2::zeros(z.raw_dim());
                let (inv2, inv4) = (0.5 / width, 0.25 / width);
                Zip::from(z).and(&mut d).for_each(|z, d| {
                    if *z >= width {
                        *d = 1.0;
                    } else if *z <= -width {
                        *z = 0.0;
                    } else {
                        let u = *z + width;
                        *d = u * inv2;
                        *z = u * u * inv4;
                    }
                });
                Some(d)
            }
            Activation::Sigmoid => {
                let mut d = Array2::zeros(z.raw_dim());
                Zip::from(z).and(&mut d).for_each(|z, d| {
                    let a = crate::render::sigmoid(*z);
                    *z = a;
                    *d = a * (1.0 - a);
                });
                Some(d)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `in × out`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub name: &'static str,
    pub layers: Vec<Dense>,
}

/// Values recorded by a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpTape {
    inputs: Vec<Array2<f64>>,
    derivs: Vec<Option<Array2<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Mlp {
    /// Layer widths `dims[0] -> ... -> dims[last]`, `hidden` activation on
    /// every layer but the last, uniform `±1/sqrt(fan_in)` initialization.
    pub fn new(name: &'static str, dims: &[usize], hidden: Activation, output: Activation, rng: &mut crate::rng::Rng) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let u = Uniform::new_inclusive(-bound, bound);
                Dense {
                    weight: Array2::from_shape_fn((w[0], w[1]), |_| u.sample(rng)),
                    bias: Array1::from_shape_fn(w[1], |_| u.sample(rng)),
                    activation: if i + 2 == dims.len() { output } else { hidden },
                }
            })
            .collect();
        Mlp { name, layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().weight.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        Ok(self.run(x.to_owned(), self.layers.len(), false)?.0)
    }

    pub fn forward_tape(&self, x: Array2<f64>) -> Result<(Array2<f64>, MlpTape), NeuralError> {
        let (a, tape) = self.run(x, self.layers.len(), true)?;
        Ok((a, tape.unwrap()))
    }

    /// Runs the first `n` layers, optionally recording a tape for them.
    fn run(&self, x: Array2<f64>, n: usize, record: bool) -> Result<(Array2<f64>, Option<MlpTape>), NeuralError> {
        let mut tape = MlpTape { inputs: Vec::with_capacity(n), derivs: Vec::with_capacity(n) };
        let mut a = x;
        for (i, l) in self.layers[..n].iter().enumerate() {
            let mut z = a.dot(&l.weight) + &l.bias;
            let d = l.activation.apply(&mut z);
            if !z.iter().all(|v| v.is_finite()) {
                return Err(NeuralError::NonFinite { network: self.name, layer: i });
            }
            if record {
                tape.inputs.push(a);
                tape.derivs.push(d);
            }
            a = z;
        }
        Ok((a, record.then_some(tape)))
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input when `input_grad` is set.
    pub fn backward(&self, tape: &MlpTape, d_out: Array2<f64>, grads: &mut MlpGrads, input_grad: bool) -> Option<Array2<f64>> {
        let mut d = d_out;
        for i in (0..tape.inputs.len()).rev() {
            if let Some(der) = &tape.derivs[i] {
                d *= der;
            }
            let (gw, gb) = &mut grads.layers[i];
            ndarray::linalg::general_mat_mul(1.0, &tape.inputs[i].t(), &d, 1.0, gw);
            *gb += &d.sum_axis(Axis(0));
            if i > 0 || input_grad {
                d = d.dot(&self.layers[i].weight.t());
            }
        }
        input_grad.then_some(d)
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self.layers.iter().map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.len()))).collect(),
        }
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let mut at = 0;
        for l in &mut self.layers {
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *v = src[at];
                at += 1;
            }
        }
        at
    }
}

impl MlpGrads {
    fn add(&mut self, other: &MlpGrads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    fn write(&self, out: &mut Vec<f64>) {
        for (w, b) in &self.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
    }

    fn check(&self, name: &str) -> Result<(), NeuralError> {
        for (i, (w, b)) in self.layers.iter().enumerate() {
            if !w.iter().chain(b.iter()).all(|v| v.is_finite()) {
                return Err(NeuralError::NonFiniteGradient(format!("{name}[{i}]")));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Field network
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub hidden_layers: usize,
    pub width: usize,
}

impl MlpShape {
    fn dims(self, input: usize, output: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend(std::iter::repeat(self.width).take(self.hidden_layers));
        d.push(output);
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub pos_freqs: usize,
    pub dir_freqs: usize,
    pub sdf: MlpShape,
    pub feature_dim: usize,
    pub color: MlpShape,
    pub semantic: MlpShape,
    pub num_classes: usize,
    /// Activation of the SDF trunk's hidden layers.
    pub trunk_activation: Activation,
    /// Initial inverse standard deviation `s0` of the opacity sigmoid.
    pub init_inv_std: f64,
    /// Radius of the sphere the trunk is initialized to (normalized units).
    pub sphere_bias: f64,
    pub sphere_init_steps: usize,
    /// Radius of the rendering bound (normalized units).
    pub bound_radius: f64,
}

impl NetworkConfig {
    /// Full-size architecture: SDF 8×256, color 4×256, semantic 2×128.
    pub fn paper() -> Self {
        NetworkConfig {
            pos_freqs: 6,
            dir_freqs: 4,
            sdf: MlpShape { hidden_layers: 8, width: 256 },
            feature_dim: 256,
            color: MlpShape { hidden_layers: 4, width: 256 },
            semantic: MlpShape { hidden_layers: 2, width: 128 },
            num_classes: SemanticClass::COUNT,
            trunk_activation: Activation::Softplus { beta: 100.0 },
            init_inv_std: 2.0,
            sphere_bias: 1.5,
            sphere_init_steps: 2000,
            bound_radius: 1.6,
        }
    }

    /// Desk-scale architecture: SDF 4×64, color 2×64, semantic 2×32, with
    /// the cheaper C¹ rectifier in the trunk.
    pub fn desk() -> Self {
        NetworkConfig {
            trunk_activation: Activation::SmoothRelu { width: 0.01 },
            sdf: MlpShape { hidden_layers: 4, width: 64 },
            feature_dim: 64,
            color: MlpShape { hidden_layers: 2, width: 64 },
            semantic: MlpShape { hidden_layers: 2, width: 32 },
            ..Self::paper()
        }
    }

    /// Miniature network for gradient checks.
    pub fn tiny() -> Self {
        NetworkConfig {
            pos_freqs: 2,
            dir_freqs: 1,
            sdf: MlpShape { hidden_layers: 2, width: 16 },
            feature_dim: 8,
            color: MlpShape { hidden_layers: 2, width: 16 },
            semantic: MlpShape { hidden_layers: 2, width: 16 },
            sphere_init_steps: 0,
            ..Self::paper()
        }
    }

    pub fn sdf_dims(&self) -> Vec<usize> {
        self.sdf.dims(encoded_len(3, self.pos_freqs), 1 + self.feature_dim)
    }

    pub fn color_input(&self) -> usize {
        3 + encoded_len(3, self.dir_freqs) + 3 + self.feature_dim
    }

    pub fn color_dims(&self) -> Vec<usize> {
        self.color.dims(self.color_input(), 3)
    }

    pub fn semantic_dims(&self) -> Vec<usize> {
        self.semantic.dims(self.feature_dim, self.num_classes)
    }

    pub fn param_count(&self) -> usize {
        let count = |d: Vec<usize>| d.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>();
        count(self.sdf_dims()) + count(self.color_dims()) + count(self.semantic_dims()) + 1
    }

    /// Hex sha256 of the architecture; checkpoints carry it.
    pub fn arch_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Similarity transform between world and the network's normalized frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub center: [f64; 3],
    pub scale: f64,
}

impl Frame {
    /// Unit bounding sphere of the scene.
    pub fn for_scene(scene: &AnalyticScene) -> Self {
        Frame { center: scene.center.into(), scale: scene.radius }
    }

    pub fn to_local(&self, x: Vec3) -> Vec3 {
        (x - Vec3::from(self.center)) / self.scale
    }

    pub fn to_world(&self, x: Vec3) -> Vec3 {
        x * self.scale + Vec3::from(self.center)
    }
}

/// Finite-difference step: `1e-3` × diagonal of the scene box, in the
/// normalized frame.
pub fn fd_step_for_scene(scene: &AnalyticScene) -> f64 {
    1e-3 * (scene.bounds_max - scene.bounds_min).norm() / scene.radius
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldNetwork {
    pub config: NetworkConfig,
    pub frame: Frame,
    /// Central-difference step in normalized units.
    pub fd_step: f64,
    pub sdf: Mlp,
    pub color: Mlp,
    pub semantic: Mlp,
    /// `s = exp(rho)`.
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetGrads {
    pub sdf: MlpGrads,
    pub color: MlpGrads,
    pub semantic: MlpGrads,
    pub rho: f64,
}

impl NetGrads {
    pub fn add(&mut self, other: &NetGrads) {
        self.sdf.add(&other.sdf);
        self.color.add(&other.color);
        self.semantic.add(&other.semantic);
        self.rho += other.rho;
    }

    /// Flat gradient in parameter-vector order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::new();
        self.sdf.write(&mut v);
        self.color.write(&mut v);
        self.semantic.write(&mut v);
        v.push(self.rho);
        v
    }

    pub fn check_finite(&self) -> Result<(), NeuralError> {
        self.sdf.check("sdf")?;
        self.color.check("color")?;
        self.semantic.check("semantic")?;
        if !self.rho.is_finite() {
            return Err(NeuralError::NonFiniteGradient("inv_std".into()));
        }
        Ok(())
    }
}

/// Per-sample outputs of a batched forward pass (normalized frame).
#[derive(Clone, Debug)]
pub struct SampleForward {
    pub sdf: Vec<f64>,
    /// `P × 3` finite-difference gradient.
    pub normal: Array2<f64>,
    /// `P × 3`, in `[0, 1]`.
    pub color: Array2<f64>,
    /// `P × L`
    pub logits: Array2<f64>,
    tape: Option<SampleTape>,
}

#[derive(Clone, Debug)]
struct SampleTape {
    /// Trunk layers before the output layer.
    sdf: MlpTape,
    /// Input of the trunk's output layer, `7P × width`.
    hidden: Array2<f64>,
    color: MlpTape,
    semantic: MlpTape,
}

/// Upstream gradients for [`FieldNetwork::backward_samples`].
pub struct SampleGrads {
    pub sdf: Vec<f64>,
    pub normal: Array2<f64>,
    pub color: Array2<f64>,
    pub logits: Array2<f64>,
}

impl SampleGrads {
    pub fn zeros(p: usize, classes: usize) -> Self {
        SampleGrads {
            sdf: vec![0.0; p],
            normal: Array2::zeros((p, 3)),
            color: Array2::zeros((p, 3)),
            logits: Array2::zeros((p, classes)),
        }
    }
}

/// Offsets of the six perturbed copies: `+x, -x, +y, -y, +z, -z`.
const FD_DIRS: [(usize, f64); 6] = [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0)];

impl FieldNetwork {
    /// Randomly initialized network. The trunk uses the geometric sphere
    /// initialization (only the raw-coordinate inputs are connected at
    /// first); call [`FieldNetwork::init_sphere`] to finish it.
    pub fn new(config: NetworkConfig, frame: Frame, fd_step: f64, seed: u64) -> Self {
        let mut rng = crate::rng::seeded(seed, crate::rng::domain::INIT);
        let mut sdf = Mlp::new("sdf", &config.sdf_dims(), config.trunk_activation, Activation::Identity, &mut rng);
        geometric_init(&mut sdf, config.sphere_bias, &mut rng);
        let color = Mlp::new("color", &config.color_dims(), Activation::Relu, Activation::Sigmoid, &mut rng);
        let semantic = Mlp::new("semantic", &config.semantic_dims(), Activation::Relu, Activation::Identity, &mut rng);
        let rho = config.init_inv_std.ln();
        FieldNetwork { config, frame, fd_step, sdf, color, semantic, rho }
    }

    /// Network for `scene`: frame, finite-difference step and sphere
    /// initialization derived from it.
    pub fn for_scene(config: NetworkConfig, scene: &AnalyticScene, seed: u64) -> Result<Self, NeuralError> {
        let mut net = Self::new(config, Frame::for_scene(scene), fd_step_for_scene(scene), seed);
        let steps = net.config.sphere_init_steps;
        if steps > 0 {
            net.init_sphere(steps, seed)?;
        }
        Ok(net)
    }

    pub fn inv_std(&self) -> f64 {
        self.rho.exp()
    }

    pub fn num_params(&self) -> usize {
        self.sdf.param_count() + self.color.param_count() + self.semantic.param_count() + 1
    }

    /// Flat parameter vector: sdf layers, color layers, semantic layers, rho;
    /// each layer as row-major weight then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        self.sdf.write_params(&mut v);
        self.color.write_params(&mut v);
        self.semantic.write_params(&mut v);
        v.push(self.rho);
        v
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<(), NeuralError> {
        if p.len() != self.num_params() {
            return Err(NeuralError::ParamLength { got: p.len(), expected: self.num_params() });
        }
        let mut at = self.sdf.read_params(p);
        at += self.color.read_params(&p[at..]);
        at += self.semantic.read_params(&p[at..]);
        self.rho = p[at];
        Ok(())
    }

    pub fn zero_grads(&self) -> NetGrads {
        NetGrads { sdf: self.sdf.zero_grads(), color: self.color.zero_grads(), semantic: self.semantic.zero_grads(), rho: 0.0 }
    }

    fn encode_points(&self, pts: &[Vec3]) -> Array2<f64> {
        let w = encoded_len(3, self.config.pos_freqs);
        let mut m = Array2::zeros((pts.len(), w));
        for (mut row, p) in m.outer_iter_mut().zip(pts) {
            encode_into(row.as_slice_mut().unwrap(), p.as_slice(), self.config.pos_freqs);
        }
        m
    }

    /// Encodings of `pts` followed by the six copies offset by `±h` along
    /// each axis (order of `FD_DIRS`). Offsets are applied to the sin/cos
    /// pairs by angle addition rather than re-evaluated.
    fn encode_with_offsets(&self, pts: &[Vec3], h: f64) -> Array2<f64> {
        let p = pts.len();
        let freqs = self.config.pos_freqs;
        let center = self.encode_points(pts);
        let w = center.ncols();
        let mut enc = Array2::zeros((7 * p, w));
        enc.slice_mut(s![0..p, ..]).assign(&center);
        for (b, (axis, sign)) in FD_DIRS.into_iter().enumerate() {
            let mut block = enc.slice_mut(s![(b + 1) * p..(b + 2) * p, ..]);
            block.assign(&center);
            let rot: Vec<(f64, f64)> = (0..freqs)
                .map(|k| (sign * h * std::f64::consts::PI * (1u64 << k) as f64).sin_cos())
                .collect();
            for mut row in block.outer_iter_mut() {
                let r = row.as_slice_mut().unwrap();
                r[axis] += sign * h;
                for (k, &(sd, cd)) in rot.iter().enumerate() {
                    let base = 3 * (1 + 2 * k);
                    let (sv, cv) = (r[base + axis], r[base + 3 + axis]);
                    r[base + axis] = sv * cd + cv * sd;
                    r[base + 3 + axis] = cv * cd - sv * sd;
                }
            }
        }
        enc
    }

    /// Trunk outputs `[f, feature]` at local points.
    pub fn trunk(&self, pts: &[Vec3]) -> Result<Array2<f64>, NeuralError> {
        self.sdf.forward(self.encode_points(pts).view())
    }

    /// Signed distances at local points (normalized units).
    pub fn sdf_local(&self, pts: &[Vec3]) -> Result<Vec<f64>, NeuralError> {
        Ok(self.trunk(pts)?.column(0).to_vec())
    }

    pub fn logits_local(&self, pts: &[Vec3]) -> Result<Array2<f64>, NeuralError> {
        let t = self.trunk(pts)?;
        self.semantic.forward(t.slice(s![.., 1..]))
    }

    /// Full forward at local points with local view directions. With
    /// `tape`, records what [`FieldNetwork::backward_samples`] needs.
    pub fn forward_samples(&self, pts: &[Vec3], dirs: &[Vec3], tape: bool) -> Result<SampleForward, NeuralError> {
        let p = pts.len();
        let h = self.fd_step;
        let enc = self.encode_with_offsets(pts, h);
        // Perturbed copies only need the distance output, not the features.
        let last = self.sdf.layers.len() - 1;
        let (hidden, sdf_tape) = self.sdf.run(enc, last, tape)?;
        let out = &self.sdf.layers[last];
        let trunk = hidden.slice(s![0..p, ..]).dot(&out.weight) + &out.bias;
        let pert = hidden.slice(s![p.., ..]).dot(&out.weight.column(0).to_owned()) + out.bias[0];
        if !trunk.iter().chain(pert.iter()).all(|v| v.is_finite()) {
            return Err(NeuralError::NonFinite { network: self.sdf.name, layer: last });
        }
        let mut normal = Array2::zeros((p, 3));
        for i in 0..p {
            for k in 0..3 {
                normal[[i, k]] = (pert[2 * k * p + i] - pert[(2 * k + 1) * p + i]) / (2.0 * h);
            }
        }
        let feature = trunk.slice(s![0..p, 1..]);
        let dl = encoded_len(3, self.config.dir_freqs);
        let mut cin = Array2::zeros((p, self.config.color_input()));
        for i in 0..p {
            let mut row = cin.row_mut(i);
            let r = row.as_slice_mut().unwrap();
            r[..3].copy_from_slice(pts[i].as_slice());
            encode_into(&mut r[3..3 + dl], dirs[i].as_slice(), self.config.dir_freqs);
            for k in 0..3 {
                r[3 + dl + k] = normal[[i, k]];
            }
            for (dst, src) in r[6 + dl..].iter_mut().zip(feature.row(i)) {
                *dst = *src;
            }
        }
        let sin = feature.to_owned();
        let (color, logits, tape) = if let Some(sdf_tape) = sdf_tape {
            let (color, ct) = self.color.forward_tape(cin)?;
            let (logits, st) = self.semantic.forward_tape(sin)?;
            (color, logits, Some(SampleTape { sdf: sdf_tape, hidden, color: ct, semantic: st }))
        } else {
            (self.color.forward(cin.view())?, self.semantic.forward(sin.view())?, None)
        };
        Ok(SampleForward { sdf: trunk.column(0).to_vec(), normal, color, logits, tape })
    }

    /// Accumulates parameter gradients for upstream gradients `g` on the
    /// outputs of a taped [`FieldNetwork::forward_samples`] call.
    pub fn backward_samples(&self, fwd: &SampleForward, g: SampleGrads, grads: &mut NetGrads) {
        let tape = fwd.tape.as_ref().expect("forward_samples was called without a tape");
        let p = fwd.sdf.len();
        let fdim = self.config.feature_dim;
        let dl = encoded_len(3, self.config.dir_freqs);
        let d_sem_in = self.semantic.backward(&tape.semantic, g.logits, &mut grads.semantic, true).unwrap();
        let d_cin = self.color.backward(&tape.color, g.color, &mut grads.color, true).unwrap();
        let mut d_normal = g.normal;
        d_normal += &d_cin.slice(s![.., 3 + dl..6 + dl]);
        let mut d_center = Array2::zeros((p, 1 + fdim));
        {
            let mut feat = d_center.slice_mut(s![.., 1..]);
            feat.assign(&d_sem_in);
            feat += &d_cin.slice(s![.., 6 + dl..]);
        }
        let inv = 1.0 / (2.0 * self.fd_step);
        let mut d_pert = Array1::zeros(6 * p);
        for i in 0..p {
            d_center[[i, 0]] = g.sdf[i];
            for k in 0..3 {
                d_pert[2 * k * p + i] = d_normal[[i, k]] * inv;
                d_pert[(2 * k + 1) * p + i] = -d_normal[[i, k]] * inv;
            }
        }
        let last = self.sdf.layers.len() - 1;
        let out = &self.sdf.layers[last];
        let (h_center, h_pert) = (tape.hidden.slice(s![0..p, ..]), tape.hidden.slice(s![p.., ..]));
        {
            let (gw, gb) = &mut grads.sdf.layers[last];
            ndarray::linalg::general_mat_mul(1.0, &h_center.t(), &d_center, 1.0, gw);
            let mut col = gw.column_mut(0);
            col += &h_pert.t().dot(&d_pert);
            *gb += &d_center.sum_axis(Axis(0));
            gb[0] += d_pert.sum();
        }
        let mut d_hidden = Array2::zeros(tape.hidden.raw_dim());
        d_hidden.slice_mut(s![0..p, ..]).assign(&d_center.dot(&out.weight.t()));
        {
            let w0 = out.weight.column(0);
            let mut rest = d_hidden.slice_mut(s![p.., ..]);
            for (mut row, dp) in rest.outer_iter_mut().zip(d_pert.iter()) {
                row.scaled_add(*dp, &w0);
            }
        }
        self.sdf.backward(&tape.sdf, d_hidden, &mut grads.sdf, false);
    }

    /// Regresses the trunk onto `‖x‖ - bias` inside the rendering bound with
    /// Adam, then checks the mean error on fresh points.
    pub fn init_sphere(&mut self, steps: usize, seed: u64) -> Result<f64, NeuralError> {
        let bias = self.config.sphere_bias;
        if !(bias > 0.0) {
            return Err(NeuralError::InvalidBias(bias));
        }
        let r = self.config.bound_radius;
        let target = |x: &Vec3| x.norm() - bias;
        let mut adam = crate::train::Adam::new(self.sdf.param_count(), Default::default());
        for step in 0..steps {
            let mut rng = crate::rng::stream(seed, crate::rng::domain::SPHERE_FIT, step as u64, 0);
            // An eighth of the points near the cone tip at the origin, which
            // uniform samples almost never reach.
            let pts: Vec<Vec3> = (0..1024)
                .map(|i| if i % 8 == 0 { random_in_cube(&mut rng, 0.1 * bias) } else { random_in_cube(&mut rng, r) })
                .collect();
            let (out, tape) = self.sdf.forward_tape(self.encode_points(&pts))?;
            let mut d = Array2::zeros(out.raw_dim());
            for (i, x) in pts.iter().enumerate() {
                d[[i, 0]] = 2.0 * (out[[i, 0]] - target(x)) / pts.len() as f64;
            }
            let mut g = self.sdf.zero_grads();
            self.sdf.backward(&tape, d, &mut g, false);
            g.check("sdf")?;
            let mut flat = Vec::new();
            g.write(&mut flat);
            let mut params = Vec::new();
            self.sdf.write_params(&mut params);
            let lr = 1e-3 * (1.0 - step as f64 / steps as f64).max(0.05);
            adam.step(&mut params, &flat, lr, &[]).map_err(|_| NeuralError::NonFiniteGradient("sdf".into()))?;
            self.sdf.read_params(&params);
        }
        let err = self.sphere_error(10_000, seed)?;
        let tolerance = 0.05 * bias;
        if err > tolerance {
            return Err(NeuralError::SphereInit { mean_error: err, tolerance });
        }
        Ok(err)
    }

    /// Mean `|f(x) - (‖x‖ - bias)|` over random points in the bound cube.
    pub fn sphere_error(&self, n: usize, seed: u64) -> Result<f64, NeuralError> {
        let mut rng = crate::rng::stream(seed, crate::rng::domain::SPHERE_FIT, u64::MAX, 1);
        let r = self.config.bound_radius;
        let pts: Vec<Vec3> = (0..n).map(|_| random_in_cube(&mut rng, r)).collect();
        let f = self.sdf_local(&pts)?;
        let bias = self.config.sphere_bias;
        Ok(pts.iter().zip(&f).map(|(x, f)| (f - (x.norm() - bias)).abs()).sum::<f64>() / n as f64)
    }
}

fn random_in_cube(rng: &mut crate::rng::Rng, r: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r))
}

/// Sphere-shaped initialization of a trunk with raw coordinates in its first
/// three inputs: the first output approximates `‖x‖ - bias`.
fn geometric_init(mlp: &mut Mlp, bias: f64, rng: &mut crate::rng::Rng) {
    let n = mlp.layers.len();
    for (i, l) in mlp.layers.iter_mut().enumerate() {
        let (fan_in, fan_out) = l.weight.dim();
        if i + 1 == n {
            let mean = (std::f64::consts::PI / fan_in as f64).sqrt();
            let sdf_col = Normal::new(mean, 1e-4).unwrap();
            let feat = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).unwrap();
            for r in 0..fan_in {
                l.weight[[r, 0]] = sdf_col.sample(rng);
                for c in 1..fan_out {
                    l.weight[[r, c]] = feat.sample(rng);
                }
            }
            l.bias.fill(0.0);
            l.bias[0] = -bias;
        } else {
            let normal = Normal::new(0.0, (2.0 / fan_out as f64).sqrt()).unwrap();
            l.weight.mapv_inplace(|_| normal.sample(rng));
            if i == 0 {
                l.weight.slice_mut(s![3.., ..]).fill(0.0);
            }
            l.bias.fill(0.0);
        }
    }
}

/// Rows per batched evaluation in the [`Field`] implementation.
const EVAL_CHUNK: usize = 4096;

impl Field for FieldNetwork {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn sdf(&self, x: Vec3) -> f64 {
        self.sdf_batch(&[x])[0]
    }

    fn sample(&self, x: Vec3, view_dir: Vec3) -> FieldSample {
        self.sample_batch(&[x], view_dir).pop().unwrap()
    }

    fn semantic_logits(&self, x: Vec3) -> Vec<f64> {
        self.semantic_logits_batch(&[x]).pop().unwrap()
    }

    fn gradient_step(&self) -> f64 {
        self.fd_step * self.frame.scale
    }

    fn sdf_batch(&self, xs: &[Vec3]) -> Vec<f64> {
        xs.par_chunks(EVAL_CHUNK)
            .flat_map_iter(|c| {
                let local: Vec<Vec3> = c.iter().map(|x| self.frame.to_local(*x)).collect();
                let f = self.sdf_local(&local).expect("finite network");
                f.into_iter().map(|f| f * self.frame.scale)
            })
            .collect()
    }

    fn semantic_logits_batch(&self, xs: &[Vec3]) -> Vec<Vec<f64>> {
        xs.par_chunks(EVAL_CHUNK)
            .flat_map_iter(|c| {
                let local: Vec<Vec3> = c.iter().map(|x| self.frame.to_local(*x)).collect();
                let l = self.logits_local(&local).expect("finite network");
                l.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>()
            })
            .collect()
    }

    fn sample_batch(&self, xs: &[Vec3], view_dir: Vec3) -> Vec<FieldSample> {
        let local: Vec<Vec3> = xs.iter().map(|x| self.frame.to_local(*x)).collect();
        let dirs = vec![view_dir; xs.len()];
        let f = self.forward_samples(&local, &dirs, false).expect("finite network");
        (0..xs.len())
            .map(|i| FieldSample {
                sdf: f.sdf[i] * self.frame.scale,
                color: [f.color[[i, 0]], f.color[[i, 1]], f.color[[i, 2]]],
                logits: f.logits.row(i).to_vec(),
            })
            .collect()
    }

    fn volume_inv_std(&self) -> Option<f64> {
        Some(self.inv_std() / self.frame.scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_layout() {
        let mut out = Vec::new();
        positional_encode(&[0.3, -0.2], 0, &mut out);
        assert_eq!(out, vec![0.3, -0.2]);
        out.clear();
        positional_encode(&[0.0, 0.0, 0.0], 3, &mut out);
        assert_eq!(out.len(), encoded_len(3, 3));
        for k in 0..3 {
            let base = 3 * (1 + 2 * k);
            assert_eq!(&out[base..base + 3], &[0.0; 3]);
            assert_eq!(&out[base + 3..base + 6], &[1.0; 3]);
        }
        out.clear();
        positional_encode(&[0.25], 2, &mut out);
        let pi = std::f64::consts::PI;
        assert_eq!(out[1], (pi * 0.25).sin());
        assert_eq!(out[2], (pi * 0.25).cos());
        assert_eq!(out[3], (2.0 * pi * 0.25).sin());
        assert_eq!(out[4], (2.0 * pi * 0.25).cos());
    }

    #[test]
    fn paper_parameter_count_is_locked() {
        // SDF: 39 -> 256 x8 -> 257; color: 289 -> 256 x4 -> 3; semantic: 256 -> 128 x2 -> 5.
        let sdf = (39 * 256 + 256) + 7 * (256 * 256 + 256) + (256 * 257 + 257);
        let color = (289 * 256 + 256) + 3 * (256 * 256 + 256) + (256 * 3 + 3);
        let semantic = (256 * 128 + 128) + (128 * 128 + 128) + (128 * 5 + 5);
        assert_eq!(NetworkConfig::paper().param_count(), sdf + color + semantic + 1);
        assert_eq!(NetworkConfig::paper().param_count(), 859_274);
    }

    #[test]
    fn params_round_trip() {
        let frame = Frame { center: [0.0; 3], scale: 1.0 };
        let net = FieldNetwork::new(NetworkConfig::tiny(), frame, 1e-3, 3);
        let p = net.params();
        assert_eq!(p.len(), net.num_params());
        assert_eq!(p.len(), NetworkConfig::tiny().param_count());
        let mut other = FieldNetwork::new(NetworkConfig::tiny(), frame, 1e-3, 4);
        other.set_params(&p).unwrap();
        assert_eq!(other, net);
        assert!(other.set_params(&p[1..]).is_err());
    }

    #[test]
    fn logits_ignore_view_direction() {
        let frame = Frame { center: [0.0; 3], scale: 1.0 };
        let net = FieldNetwork::new(NetworkConfig::tiny(), frame, 1e-3, 5);
        let pts = vec![Vec3::new(0.1, 0.2, -0.3), Vec3::new(-0.5, 0.0, 0.4)];
        let a = net.forward_samples(&pts, &[Vec3::x(), Vec3::y()], false).unwrap();
        let b = net.forward_samples(&pts, &[-Vec3::z(), Vec3::x()], false).unwrap();
        assert_eq!(a.logits, b.logits);
        assert_eq!(a.sdf, b.sdf);
        assert!(a.color.iter().all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn sphere_init_rejects_non_positive_bias() {
        let frame = Frame { center: [0.0; 3], scale: 1.0 };
        let mut net = FieldNetwork::new(NetworkConfig { sphere_bias: 0.0, ..NetworkConfig::tiny() }, frame, 1e-3, 1);
        assert_eq!(net.init_sphere(10, 1), Err(NeuralError::InvalidBias(0.0)));
    }
}
