//! From-scratch feed-forward networks, their Adam/MSE trainer, and the
//! per-task feature encoders.
//!
//! The distributed neural controller is a dense multilayer perceptron run
//! identically by every agent on its local observation: its own state, the
//! states of its five nearest neighbors in ascending-distance order, and
//! task extras (closest obstacle points and target, or predator state). The
//! trainer minimizes mean-squared error against expert accelerations over
//! shuffled minibatches with Adam; initialization and shuffling are seeded so
//! training is reproducible bit-for-bit within one build.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::RngExt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::{nearest_neighbors, FlockState, Obstacle};
use crate::mpc::Controller;
use crate::rng::seeded;
use crate::vector::Vector;
use crate::{Error, Result};

/// Elementwise layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer; `weights` is row-major with one row per output.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
    pub in_width: usize,
}

impl Layer {
    pub fn out_width(&self) -> usize {
        self.biases.len()
    }
}

/// Feed-forward network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Network shape: `hidden_layers` hidden layers of `hidden_width` units plus
/// a linear output layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlpArchitecture {
    pub input: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output: usize,
    pub hidden_activation: Activation,
}

impl MlpArchitecture {
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_layers + 2);
        w.push(self.input);
        for _ in 0..self.hidden_layers {
            w.push(self.hidden_width);
        }
        w.push(self.output);
        w
    }
}

impl Mlp {
    /// Seeded initialization: weights uniform in `±1/sqrt(fan_in)`, biases
    /// zero, hidden activations per the architecture, linear output.
    pub fn init(arch: &MlpArchitecture, seed: u64) -> Self {
        let widths = arch.widths();
        let mut rng = seeded(seed);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-scale..scale))
                .collect();
            let activation = if l + 2 == widths.len() {
                Activation::Identity
            } else {
                arch.hidden_activation
            };
            layers.push(Layer {
                weights,
                biases: vec![0.0; fan_out],
                activation,
                in_width: fan_in,
            });
        }
        Mlp { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_width)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_width)
    }

    /// Dense forward pass. The output is not clamped here; the controller
    /// wrapper applies the acceleration bound.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_width() {
            return Err(Error::WidthMismatch {
                expected: self.input_width(),
                actual: x.len(),
            });
        }
        let mut current = x.to_vec();
        for layer in &self.layers {
            let mut next = vec![0.0; layer.out_width()];
            for (o, out) in next.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.in_width..(o + 1) * layer.in_width];
                *out = layer.activation.apply(dot(row, &current) + layer.biases[o]);
            }
            current = next;
        }
        Ok(current)
    }
}

/// Unrolled dot product; independent accumulators let the compiler vectorize.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let mut acc = [0.0_f64; 4];
    let quads = n / 4;
    for k in 0..quads {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * quads..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// One expert observation-action pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub features: Vec<f64>,
    pub label: Vec<f64>,
}

/// Adam optimizer settings and training schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 10_000,
            batch_size: 500,
            seed: 0,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidParam("lr must be > 0".into()));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::InvalidParam(
                "beta1 and beta2 must lie strictly in (0, 1)".into(),
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParam(
                "batch_size and epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// First/second-moment state for one parameter tensor.
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// Bias-corrected Adam update at step `t` (1-based).
    fn update(&mut self, params: &mut [f64], grads: &[f64], cfg: &AdamConfig, t: u64) {
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

/// Per-layer gradient accumulator matching [`Layer`] shapes.
struct LayerGrads {
    dw: Vec<f64>,
    db: Vec<f64>,
}

fn zero_grads(mlp: &Mlp) -> Vec<LayerGrads> {
    mlp.layers
        .iter()
        .map(|l| LayerGrads {
            dw: vec![0.0; l.weights.len()],
            db: vec![0.0; l.biases.len()],
        })
        .collect()
}

/// Sum-of-squared-errors and parameter gradients (of the squared-error sum)
/// over one contiguous slice of rows.
fn chunk_grads(mlp: &Mlp, xs: &[f64], ts: &[f64], rows: usize) -> (f64, Vec<LayerGrads>) {
    let in_w = mlp.input_width();
    let out_w = mlp.output_width();

    // Forward, keeping each layer's activations for the whole chunk.
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(mlp.layers.len());
    let mut prev = xs;
    let mut prev_w = in_w;
    for layer in &mlp.layers {
        let w = layer.out_width();
        let mut out = vec![0.0; rows * w];
        for b in 0..rows {
            let x = &prev[b * prev_w..(b + 1) * prev_w];
            let y = &mut out[b * w..(b + 1) * w];
            for o in 0..w {
                let row = &layer.weights[o * layer.in_width..(o + 1) * layer.in_width];
                y[o] = layer.activation.apply(dot(row, x) + layer.biases[o]);
            }
        }
        acts.push(out);
        prev = acts.last().unwrap();
        prev_w = w;
    }

    // Squared-error sum and its derivative at the output.
    let output = acts.last().unwrap();
    let mut sq_err = 0.0;
    let mut delta = vec![0.0; rows * out_w];
    for i in 0..rows * out_w {
        let e = output[i] - ts[i];
        sq_err += e * e;
        delta[i] = 2.0 * e;
    }

    // Backward.
    let mut grads = zero_grads(mlp);
    for (l, layer) in mlp.layers.iter().enumerate().rev() {
        let w = layer.out_width();
        let out = &acts[l];
        // Fold the activation derivative into the running delta.
        for i in 0..rows * w {
            delta[i] *= layer.activation.derivative_from_output(out[i]);
        }
        let below: &[f64] = if l == 0 { xs } else { &acts[l - 1] };
        let below_w = layer.in_width;
        let g = &mut grads[l];
        for b in 0..rows {
            let d = &delta[b * w..(b + 1) * w];
            let x = &below[b * below_w..(b + 1) * below_w];
            for o in 0..w {
                if d[o] != 0.0 {
                    axpy(d[o], x, &mut g.dw[o * below_w..(o + 1) * below_w]);
                }
                g.db[o] += d[o];
            }
        }
        if l > 0 {
            let mut next_delta = vec![0.0; rows * below_w];
            for b in 0..rows {
                let d = &delta[b * w..(b + 1) * w];
                let nd = &mut next_delta[b * below_w..(b + 1) * below_w];
                for o in 0..w {
                    if d[o] != 0.0 {
                        let row = &layer.weights[o * below_w..(o + 1) * below_w];
                        axpy(d[o], row, nd);
                    }
                }
            }
            delta = next_delta;
        }
    }
    (sq_err, grads)
}

/// Rows per gradient chunk. Fixed so the reduction order (and therefore the
/// result bit pattern) does not depend on thread count.
const GRAD_CHUNK: usize = 64;

/// Minibatch squared-error sum and gradients, accumulated chunk by chunk in
/// index order.
fn batch_grads(mlp: &Mlp, xs: &[f64], ts: &[f64], rows: usize) -> (f64, Vec<LayerGrads>) {
    let in_w = mlp.input_width();
    let out_w = mlp.output_width();
    let ranges: Vec<(usize, usize)> = (0..rows)
        .step_by(GRAD_CHUNK)
        .map(|start| (start, (start + GRAD_CHUNK).min(rows)))
        .collect();

    let compute = |&(start, end): &(usize, usize)| {
        chunk_grads(
            mlp,
            &xs[start * in_w..end * in_w],
            &ts[start * out_w..end * out_w],
            end - start,
        )
    };

    #[cfg(feature = "parallel")]
    let partials: Vec<(f64, Vec<LayerGrads>)> = {
        use rayon::prelude::*;
        ranges.par_iter().map(compute).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<(f64, Vec<LayerGrads>)> = ranges.iter().map(compute).collect();

    let mut sq_err = 0.0;
    let mut total = zero_grads(mlp);
    for (err, grads) in partials {
        sq_err += err;
        for (acc, g) in total.iter_mut().zip(grads) {
            for (a, x) in acc.dw.iter_mut().zip(&g.dw) {
                *a += x;
            }
            for (a, x) in acc.db.iter_mut().zip(&g.db) {
                *a += x;
            }
        }
    }
    (sq_err, total)
}

/// Trains a network on expert samples with Adam over shuffled minibatches.
///
/// Returns the parameters and the per-epoch mean-squared training error
/// (mean over samples and output components). Fails on inconsistent widths
/// or when the loss stops being finite.
pub fn train(
    samples: &[TrainingSample],
    arch: &MlpArchitecture,
    adam: &AdamConfig,
) -> Result<(Mlp, Vec<f64>)> {
    adam.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptySet("training samples"));
    }
    for s in samples {
        if s.features.len() != arch.input {
            return Err(Error::WidthMismatch {
                expected: arch.input,
                actual: s.features.len(),
            });
        }
        if s.label.len() != arch.output {
            return Err(Error::WidthMismatch {
                expected: arch.output,
                actual: s.label.len(),
            });
        }
    }

    let mut mlp = Mlp::init(arch, adam.seed);
    let mut adam_states: Vec<(AdamState, AdamState)> = mlp
        .layers
        .iter()
        .map(|l| (AdamState::new(l.weights.len()), AdamState::new(l.biases.len())))
        .collect();

    let n = samples.len();
    let out_w = arch.output;
    let in_w = arch.input;
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = seeded(adam.seed.wrapping_add(1));
    let mut xs = vec![0.0; adam.batch_size * in_w];
    let mut ts = vec![0.0; adam.batch_size * out_w];
    let mut history = Vec::with_capacity(adam.epochs);
    let mut step: u64 = 0;

    for epoch in 0..adam.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_sq_err = 0.0;
        for batch in order.chunks(adam.batch_size) {
            let rows = batch.len();
            for (r, &idx) in batch.iter().enumerate() {
                xs[r * in_w..(r + 1) * in_w].copy_from_slice(&samples[idx].features);
                ts[r * out_w..(r + 1) * out_w].copy_from_slice(&samples[idx].label);
            }
            let (sq_err, grads) = batch_grads(&mlp, &xs[..rows * in_w], &ts[..rows * out_w], rows);
            epoch_sq_err += sq_err;
            // Gradient of the minibatch mean.
            let scale = 1.0 / (rows * out_w) as f64;
            step += 1;
            for ((layer, g), (mw, mb)) in
                mlp.layers.iter_mut().zip(&grads).zip(&mut adam_states)
            {
                let mut dw = g.dw.clone();
                for x in &mut dw {
                    *x *= scale;
                }
                let mut db = g.db.clone();
                for x in &mut db {
                    *x *= scale;
                }
                mw.update(&mut layer.weights, &dw, adam, step);
                mb.update(&mut layer.biases, &db, adam, step);
            }
        }
        let epoch_mse = epoch_sq_err / (n * out_w) as f64;
        if !epoch_mse.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.push(epoch_mse);
    }
    Ok((mlp, history))
}

/// Mean-squared error of the network over a sample set (mean over samples
/// and output components).
pub fn evaluate_mse(mlp: &Mlp, samples: &[TrainingSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySet("evaluation samples"));
    }
    let out_w = mlp.output_width();
    let mut sq = 0.0;
    for s in samples {
        let y = mlp.forward(&s.features)?;
        for (yi, ti) in y.iter().zip(&s.label) {
            let e = yi - ti;
            sq += e * e;
        }
    }
    Ok(sq / (samples.len() * out_w) as f64)
}

/// Input layout of the distributed neural controller.
///
/// The tag pins the observation shape: the agent itself plus its five
/// nearest neighbors, with per-task extras.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureLayout {
    /// Planar basic flocking: 6 agents × (position, velocity).
    Bf24,
    /// Planar collision avoidance; same observation as `Bf24`.
    Ca24,
    /// Planar obstacle avoidance with target seeking: per-agent closest
    /// obstacle points plus the target.
    Oa38,
    /// Planar predator avoidance: predator position and velocity appended.
    Pa28,
    /// Spatial basic flocking: 6 agents × 3D (position, velocity).
    Bf36,
}

impl FeatureLayout {
    pub const NEIGHBORS: usize = 5;

    pub fn width(self) -> usize {
        match self {
            FeatureLayout::Bf24 | FeatureLayout::Ca24 => 24,
            FeatureLayout::Oa38 => 38,
            FeatureLayout::Pa28 => 28,
            FeatureLayout::Bf36 => 36,
        }
    }

    /// Spatial dimension the layout encodes.
    pub fn dim(self) -> usize {
        match self {
            FeatureLayout::Bf36 => 3,
            _ => 2,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            FeatureLayout::Bf24 => "bf24",
            FeatureLayout::Ca24 => "ca24",
            FeatureLayout::Oa38 => "oa38",
            FeatureLayout::Pa28 => "pa28",
            FeatureLayout::Bf36 => "bf36",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "bf24" => Some(FeatureLayout::Bf24),
            "ca24" => Some(FeatureLayout::Ca24),
            "oa38" => Some(FeatureLayout::Oa38),
            "pa28" => Some(FeatureLayout::Pa28),
            "bf36" => Some(FeatureLayout::Bf36),
            _ => None,
        }
    }

    /// Layout used when cloning a task's expert at a given dimension.
    pub fn for_task(task: crate::cost::Task, dim: usize) -> Result<Self> {
        use crate::cost::Task;
        match (task, dim) {
            (Task::BasicFlocking, 2) => Ok(FeatureLayout::Bf24),
            (Task::CollisionAvoidance, 2) => Ok(FeatureLayout::Ca24),
            (Task::ObstacleTarget, 2) => Ok(FeatureLayout::Oa38),
            (Task::PredatorAvoidance, 2) => Ok(FeatureLayout::Pa28),
            (Task::BasicFlocking, 3) => Ok(FeatureLayout::Bf36),
            _ => Err(Error::InvalidParam(alloc::format!(
                "no feature layout for task {task:?} in dimension {dim}"
            ))),
        }
    }
}

/// Encodes agent `i`'s local observation in absolute world coordinates:
/// its own position/velocity, its five nearest neighbors' in ascending
/// distance order (ties by index), then the layout's extras.
pub fn encode_features<const D: usize>(
    flock: &FlockState<D>,
    agent: usize,
    layout: FeatureLayout,
    obstacles: &[Obstacle<D>],
    target: Option<&Vector<D>>,
) -> Result<Vec<f64>> {
    if layout.dim() != D {
        return Err(Error::WidthMismatch {
            expected: layout.dim(),
            actual: D,
        });
    }
    let neighbors = nearest_neighbors(flock, agent, FeatureLayout::NEIGHBORS)?;
    let mut listed = Vec::with_capacity(1 + neighbors.len());
    listed.push(agent);
    listed.extend(&neighbors);

    let mut out = Vec::with_capacity(layout.width());
    match layout {
        FeatureLayout::Bf24 | FeatureLayout::Ca24 | FeatureLayout::Bf36 => {
            for &j in &listed {
                out.extend_from_slice(flock.agents[j].position.as_slice());
                out.extend_from_slice(flock.agents[j].velocity.as_slice());
            }
        }
        FeatureLayout::Oa38 => {
            if obstacles.is_empty() {
                return Err(Error::MissingObservable("obstacles"));
            }
            let target = target.ok_or(Error::MissingObservable("target"))?;
            for &j in &listed {
                let p = &flock.agents[j].position;
                out.extend_from_slice(p.as_slice());
                out.extend_from_slice(flock.agents[j].velocity.as_slice());
                let nearest = obstacles
                    .iter()
                    .min_by(|a, b| {
                        a.boundary_distance(p).total_cmp(&b.boundary_distance(p))
                    })
                    .unwrap();
                out.extend_from_slice(nearest.closest_point(p).as_slice());
            }
            out.extend_from_slice(target.as_slice());
        }
        FeatureLayout::Pa28 => {
            let predator = flock
                .predator
                .as_ref()
                .ok_or(Error::MissingObservable("predator state"))?;
            for &j in &listed {
                out.extend_from_slice(flock.agents[j].position.as_slice());
                out.extend_from_slice(flock.agents[j].velocity.as_slice());
            }
            out.extend_from_slice(predator.position.as_slice());
            out.extend_from_slice(predator.velocity.as_slice());
        }
    }
    debug_assert_eq!(out.len(), layout.width());
    Ok(out)
}

/// The symmetric distributed neural controller: every agent runs the same
/// network on its own observation, and outputs are clamped to the
/// acceleration bound.
pub struct NeuralController<const D: usize> {
    pub mlp: Mlp,
    pub layout: FeatureLayout,
    pub a_max: f64,
    pub obstacles: Vec<Obstacle<D>>,
    pub target: Option<Vector<D>>,
}

impl<const D: usize> NeuralController<D> {
    pub fn new(mlp: Mlp, layout: FeatureLayout, a_max: f64) -> Result<Self> {
        if mlp.input_width() != layout.width() {
            return Err(Error::WidthMismatch {
                expected: layout.width(),
                actual: mlp.input_width(),
            });
        }
        if mlp.output_width() != layout.dim() {
            return Err(Error::WidthMismatch {
                expected: layout.dim(),
                actual: mlp.output_width(),
            });
        }
        Ok(Self {
            mlp,
            layout,
            a_max,
            obstacles: Vec::new(),
            target: None,
        })
    }

    pub fn with_environment(mut self, obstacles: Vec<Obstacle<D>>, target: Option<Vector<D>>) -> Self {
        self.obstacles = obstacles;
        self.target = target;
        self
    }

    fn act(&self, flock: &FlockState<D>, agent: usize) -> Result<Vector<D>> {
        let features = encode_features(
            flock,
            agent,
            self.layout,
            &self.obstacles,
            self.target.as_ref(),
        )?;
        let raw = self.mlp.forward(&features)?;
        let mut a = Vector::ZERO;
        for d in 0..D {
            a[d] = raw[d];
        }
        Ok(a.clamp_norm(self.a_max))
    }
}

impl<const D: usize> Controller<D> for NeuralController<D> {
    fn name(&self) -> &'static str {
        "dnc"
    }

    fn decide(&mut self, flock: &FlockState<D>) -> Result<Vec<Vector<D>>> {
        (0..flock.len()).map(|i| self.act(flock, i)).collect()
    }
}
