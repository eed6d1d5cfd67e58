//! Conditional vector field `v(t, x, class)` as a dense SiLU network, trained
//! with the straight-path conditional flow-matching objective.
//!
//! Network input is `[x, time features, one-hot class]`. The time features are
//! `sin(pi k t), cos(pi k t)` for `k = 1..=time_features/2` (plus `t` itself
//! when the count is odd). Hidden layers use SiLU; the output layer is linear.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledTrajectory;
use crate::error::{Error, Result};
use crate::flow::VelocityField;
use crate::rng::stream_rng;
use crate::trajectory::{ClassLabel, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub time_features: usize,
    /// Start the output layer at zero, so the untrained field is `v = 0`.
    pub zero_output_layer: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 2,
            hidden_width: 1024,
            time_features: 16,
            zero_output_layer: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 {
            return Err(Error::Parameter("hidden_width must be positive".into()));
        }
        if self.time_features == 0 {
            return Err(Error::Parameter("time_features must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Cosine-anneal the learning rate to `min_lr_ratio * learning_rate`.
    pub cosine_decay: bool,
    pub min_lr_ratio: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 6000,
            batch_size: 128,
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            cosine_decay: true,
            min_lr_ratio: 0.05,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter("learning_rate must be finite and non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Parameter("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Parameter("epsilon must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_lr_ratio) {
            return Err(Error::Parameter("min_lr_ratio must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize) -> f64 {
        if !self.cosine_decay || self.steps <= 1 {
            return self.learning_rate;
        }
        let progress = step as f64 / (self.steps - 1) as f64;
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.learning_rate * (self.min_lr_ratio + (1.0 - self.min_lr_ratio) * cos)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    /// `(out, in)`, row-major.
    w: Array2<f64>,
    b: Array1<f64>,
}

impl Dense {
    fn out_dim(&self) -> usize {
        self.w.nrows()
    }
    fn in_dim(&self) -> usize {
        self.w.ncols()
    }
}

/// Gradients with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    /// Flattened in [`VectorField::parameters`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|(w, b)| w.iter().chain(b.iter()).map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    traj_dim: usize,
    num_classes: usize,
    time_features: usize,
    layers: Vec<Dense>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

pub fn time_embedding(t: f64, count: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), count);
    for k in 0..count / 2 {
        let w = std::f64::consts::PI * (k + 1) as f64 * t;
        out[2 * k] = w.sin();
        out[2 * k + 1] = w.cos();
    }
    if count % 2 == 1 {
        out[count - 1] = t;
    }
}

struct Forward {
    /// Layer inputs: `acts[0]` is the network input.
    acts: Vec<Array2<f64>>,
    /// Hidden pre-activations.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl VectorField {
    /// Randomly initialized field (PyTorch-style uniform `+-1/sqrt(fan_in)`).
    pub fn new<R: Rng + ?Sized>(
        traj_dim: usize,
        num_classes: usize,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        if traj_dim == 0 || num_classes == 0 {
            return Err(Error::Parameter("trajectory dim and class count must be positive".into()));
        }
        let input = traj_dim + cfg.time_features + num_classes;
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(cfg.hidden_width, cfg.hidden_layers));
        dims.push(traj_dim);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, win)| {
                let (fan_in, fan_out) = (win[0], win[1]);
                if l == last && cfg.zero_output_layer {
                    return Dense {
                        w: Array2::zeros((fan_out, fan_in)),
                        b: Array1::zeros(fan_out),
                    };
                }
                let bound = 1.0 / (fan_in as f64).sqrt();
                Dense {
                    w: Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound)),
                    b: Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Ok(Self {
            traj_dim,
            num_classes,
            time_features: cfg.time_features,
            layers,
        })
    }

    pub fn traj_dim(&self) -> usize {
        self.traj_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn time_features(&self) -> usize {
        self.time_features
    }

    pub fn input_dim(&self) -> usize {
        self.traj_dim + self.time_features + self.num_classes
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All weights and biases, layer by layer (row-major weights, then bias).
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_parameters() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.num_parameters(),
                params.len()
            )));
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.w.len());
            l.w.iter_mut().zip(w).for_each(|(d, s)| *d = *s);
            let (b, tail) = tail.split_at(l.b.len());
            l.b.iter_mut().zip(b).for_each(|(d, s)| *d = *s);
            rest = tail;
        }
        Ok(())
    }

    /// Fails unless the field maps trajectories of dimension `traj_dim`.
    pub fn expect_dims(&self, traj_dim: usize, num_classes: usize) -> Result<()> {
        if self.traj_dim != traj_dim || self.num_classes != num_classes {
            return Err(Error::Dimension(format!(
                "model maps dimension {} with {} classes; expected {traj_dim} with {num_classes}",
                self.traj_dim, self.num_classes
            )));
        }
        Ok(())
    }

    fn build_input(&self, ts: &[f64], xs: ArrayView2<'_, f64>, classes: &[ClassLabel]) -> Result<Array2<f64>> {
        let rows = xs.nrows();
        if xs.ncols() != self.traj_dim {
            return Err(Error::Dimension(format!(
                "input has dimension {}, field expects {}",
                xs.ncols(),
                self.traj_dim
            )));
        }
        if ts.len() != rows || classes.len() != rows {
            return Err(Error::Dimension("batch sizes of t, x and class differ".into()));
        }
        let d = self.traj_dim;
        let tf = self.time_features;
        let mut input = Array2::zeros((rows, self.input_dim()));
        for (r, mut row) in input.outer_iter_mut().enumerate() {
            if classes[r].id() >= self.num_classes {
                return Err(Error::Parameter(format!("class {} out of range", classes[r])));
            }
            let row = row.as_slice_mut().expect("standard layout");
            for (dst, src) in row[..d].iter_mut().zip(xs.row(r).iter()) {
                *dst = *src;
            }
            time_embedding(ts[r], tf, &mut row[d..d + tf]);
            classes[r].one_hot_into(&mut row[d + tf..]);
        }
        Ok(input)
    }

    fn run(&self, input: Array2<f64>, keep: bool) -> Forward {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = input;
        let n = self.layers.len();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.w.t());
            z += &layer.b;
            if l + 1 == n {
                if keep {
                    acts.push(a);
                }
                return Forward { acts, pre, output: z };
            }
            let next = z.mapv(silu);
            if keep {
                acts.push(a);
                pre.push(z);
            }
            a = next;
        }
        unreachable!("network has an output layer")
    }

    /// Velocities for a batch of states (one row each).
    pub fn forward_batch(
        &self,
        ts: &[f64],
        xs: ArrayView2<'_, f64>,
        classes: &[ClassLabel],
    ) -> Result<Array2<f64>> {
        let input = self.build_input(ts, xs, classes)?;
        Ok(self.run(input, false).output)
    }

    pub fn forward(&self, t: f64, x: &[f64], class: ClassLabel) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Parameter(format!("flow time {t} outside [0, 1]")));
        }
        let xs = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let out = self.forward_batch(&[t], xs, &[class])?;
        Ok(out.into_raw_vec_and_offset().0)
    }

    /// Mean over rows of `|v(t, x, c) - target|^2` and its parameter gradients.
    pub fn loss_and_gradients(
        &self,
        ts: &[f64],
        xs: ArrayView2<'_, f64>,
        classes: &[ClassLabel],
        targets: ArrayView2<'_, f64>,
    ) -> Result<(f64, Gradients)> {
        let rows = xs.nrows();
        if rows == 0 {
            return Err(Error::Parameter("empty batch".into()));
        }
        if targets.dim() != (rows, self.traj_dim) {
            return Err(Error::Dimension("target batch shape mismatch".into()));
        }
        let input = self.build_input(ts, xs, classes)?;
        let fwd = self.run(input, true);
        let diff = &fwd.output - &targets;
        let loss = diff.iter().map(|x| x * x).sum::<f64>() / rows as f64;
        let d_out = diff * (2.0 / rows as f64);
        Ok((loss, self.backward(&fwd, d_out)))
    }

    fn backward(&self, fwd: &Forward, d_out: Array2<f64>) -> Gradients {
        let n = self.layers.len();
        let mut grads = Vec::with_capacity(n);
        let mut dz = d_out;
        for l in (0..n).rev() {
            let a_prev = &fwd.acts[l];
            let dw = dz.t().dot(a_prev);
            let db = dz.sum_axis(Axis(0));
            if l > 0 {
                let mut da = dz.dot(&self.layers[l].w);
                Zip::from(&mut da)
                    .and(&fwd.pre[l - 1])
                    .for_each(|g, &z| *g *= silu_grad(z));
                dz = da;
            }
            grads.push((dw, db));
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    /// Conditional flow-matching loss on `batch`.
    ///
    /// Draws `x0 ~ N(0, I)` and `t ~ U[0, 1)` per sample, forms
    /// `x_t = (1 - t) x0 + t x1` and regresses `v(t, x_t, c)` on `x1 - x0`.
    pub fn cfm_loss<R: Rng + ?Sized>(
        &self,
        batch: &[(&Trajectory, ClassLabel)],
        rng: &mut R,
    ) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Parameter("cfm_loss needs a non-empty batch".into()));
        }
        let d = self.traj_dim;
        let rows = batch.len();
        let mut xs = Array2::zeros((rows, d));
        let mut targets = Array2::zeros((rows, d));
        let mut ts = Vec::with_capacity(rows);
        let mut classes = Vec::with_capacity(rows);
        for (r, (traj, class)) in batch.iter().enumerate() {
            if traj.dim() != d {
                return Err(Error::Dimension(format!(
                    "trajectory dimension {} does not match field dimension {d}",
                    traj.dim()
                )));
            }
            let t: f64 = rng.random();
            for (k, &x1) in traj.as_slice().iter().enumerate() {
                let x0: f64 = StandardNormal.sample(rng);
                xs[[r, k]] = (1.0 - t) * x0 + t * x1;
                targets[[r, k]] = x1 - x0;
            }
            ts.push(t);
            classes.push(*class);
        }
        self.loss_and_gradients(&ts, xs.view(), &classes, targets.view())
    }
}

impl VelocityField for VectorField {
    fn dim(&self) -> usize {
        self.traj_dim
    }

    fn velocity_batch(&self, t: f64, xs: ArrayView2<'_, f64>, class: ClassLabel) -> Result<Array2<f64>> {
        let rows = xs.nrows();
        self.forward_batch(&vec![t; rows], xs, &vec![class; rows])
    }
}

struct Adam {
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
    step: i32,
}

impl Adam {
    fn new(field: &VectorField) -> Self {
        let zeros: Vec<_> = field
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.raw_dim())))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn update(&mut self, field: &mut VectorField, grads: &Gradients, lr: f64, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.epsilon);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let apply = |p: f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            p - lr * (*m / c1) / ((*v / c2).sqrt() + eps)
        };
        for (((layer, (gw, gb)), (mw, mb)), (vw, vb)) in field
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            Zip::from(&mut layer.w)
                .and(gw)
                .and(mw)
                .and(vw)
                .for_each(|p, &g, m, v| *p = apply(*p, g, m, v));
            Zip::from(&mut layer.b)
                .and(gb)
                .and(mb)
                .and(vb)
                .for_each(|p, &g, m, v| *p = apply(*p, g, m, v));
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub field: VectorField,
    /// Minibatch loss at every step.
    pub losses: Vec<f64>,
}

/// Mean of a window of losses, used to compare the start and end of training.
pub fn smoothed(losses: &[f64], window: usize) -> (f64, f64) {
    let w = window.clamp(1, losses.len().max(1));
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    (mean(&losses[..w]), mean(&losses[losses.len() - w..]))
}

/// Adam on minibatches drawn uniformly with replacement from `data`.
/// Single-threaded and fully determined by `cfg.seed`.
pub fn train(mut field: VectorField, data: &[LabeledTrajectory], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Parameter("training set is empty".into()));
    }
    let mut rng = stream_rng(cfg.seed, 0);
    let mut adam = Adam::new(&field);
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for step in 0..cfg.steps {
        batch.clear();
        for _ in 0..cfg.batch_size {
            let s = &data[rng.random_range(0..data.len())];
            batch.push((&s.trajectory, s.class));
        }
        let (loss, grads) = field.cfm_loss(&batch, &mut rng)?;
        if !loss.is_finite() || !grads.norm().is_finite() {
            let last_finite_step = step.saturating_sub(1);
            return Err(Error::Diverged {
                step,
                last_finite_step,
                last_loss: losses.last().copied().unwrap_or(f64::NAN),
            });
        }
        losses.push(loss);
        adam.update(&mut field, &grads, cfg.lr_at(step), cfg);
        if step % 500 == 0 {
            log::debug!("step {step}: loss {loss:.5}");
        }
    }
    Ok(TrainOutcome { field, losses })
}

const MAGIC: &[u8; 8] = b"SAFEFMVF";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Checkpoint layout (little-endian):
/// magic `SAFEFMVF`, `u32` version, `u32` trajectory dim, `u32` time
/// features, `u32` classes, `u32` layer count, then per layer `u32` out,
/// `u32` in, `out * in` row-major `f64` weights and `out` `f64` biases.
pub fn save_model(field: &VectorField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(32 + 8 * field.num_parameters());
    buf.extend_from_slice(MAGIC);
    for v in [
        CHECKPOINT_VERSION,
        field.traj_dim as u32,
        field.time_features as u32,
        field.num_classes as u32,
        field.layers.len() as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for l in &field.layers {
        buf.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
        buf.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
        for x in l.w.iter().chain(l.b.iter()) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<VectorField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let truncated = || bad("file is truncated".into());
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(8) != Some(MAGIC.as_slice()) {
        return Err(bad("not a vector-field checkpoint (bad magic)".into()));
    }
    let version = r.u32().ok_or_else(truncated)?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "unsupported format version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let traj_dim = r.u32().ok_or_else(truncated)? as usize;
    let time_features = r.u32().ok_or_else(truncated)? as usize;
    let num_classes = r.u32().ok_or_else(truncated)? as usize;
    let num_layers = r.u32().ok_or_else(truncated)? as usize;
    if num_layers == 0 {
        return Err(bad("checkpoint has no layers".into()));
    }
    let mut expected_in = traj_dim + time_features + num_classes;
    let mut layers = Vec::with_capacity(num_layers);
    for l in 0..num_layers {
        let out = r.u32().ok_or_else(truncated)? as usize;
        let inp = r.u32().ok_or_else(truncated)? as usize;
        if inp != expected_in {
            return Err(Error::Dimension(format!(
                "checkpoint layer {l} takes {inp} inputs, previous layer produces {expected_in}"
            )));
        }
        let count = out.checked_mul(inp).ok_or_else(truncated)?;
        if count.saturating_mul(8) > bytes.len() {
            return Err(truncated());
        }
        let w: Vec<f64> = (0..count).map(|_| r.f64()).collect::<Option<_>>().ok_or_else(truncated)?;
        let b: Vec<f64> = (0..out).map(|_| r.f64()).collect::<Option<_>>().ok_or_else(truncated)?;
        if w.iter().chain(&b).any(|x| !x.is_finite()) {
            return Err(bad(format!("layer {l} has non-finite parameters")));
        }
        layers.push(Dense {
            w: Array2::from_shape_vec((out, inp), w).map_err(|e| bad(e.to_string()))?,
            b: Array1::from(b),
        });
        expected_in = out;
    }
    if expected_in != traj_dim {
        return Err(Error::Dimension(format!(
            "checkpoint output dimension {expected_in} differs from trajectory dimension {traj_dim}"
        )));
    }
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(VectorField {
        traj_dim,
        num_classes,
        time_features,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(zero_out: bool, seed: u64) -> VectorField {
        let cfg = ModelConfig {
            hidden_layers: 2,
            hidden_width: 8,
            time_features: 5,
            zero_output_layer: zero_out,
        };
        VectorField::new(6, 2, &cfg, &mut stream_rng(seed, 0)).unwrap()
    }

    fn batch(rows: usize, seed: u64) -> (Vec<f64>, Array2<f64>, Vec<ClassLabel>, Array2<f64>) {
        let mut rng = stream_rng(seed, 9);
        let ts = (0..rows).map(|_| rng.random::<f64>()).collect();
        let xs = Array2::from_shape_fn((rows, 6), |_| StandardNormal.sample(&mut rng));
        let classes = (0..rows).map(|r| ClassLabel::new(r % 2, 2).unwrap()).collect();
        let targets = Array2::from_shape_fn((rows, 6), |_| StandardNormal.sample(&mut rng));
        (ts, xs, classes, targets)
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut field = small(false, 3);
        let (ts, xs, classes, targets) = batch(5, 4);
        let (_, grads) = field.loss_and_gradients(&ts, xs.view(), &classes, targets.view()).unwrap();
        let analytic = grads.flatten();
        let params = field.parameters();
        let eps = 1e-6;
        for k in 0..params.len() {
            let mut p = params.clone();
            p[k] = params[k] + eps;
            field.set_parameters(&p).unwrap();
            let up = field.loss_and_gradients(&ts, xs.view(), &classes, targets.view()).unwrap().0;
            p[k] = params[k] - eps;
            field.set_parameters(&p).unwrap();
            let down = field.loss_and_gradients(&ts, xs.view(), &classes, targets.view()).unwrap().0;
            let fd = (up - down) / (2.0 * eps);
            let scale = analytic[k].abs().max(fd.abs()).max(1e-3);
            assert!(
                (analytic[k] - fd).abs() / scale < 1e-4,
                "param {k}: analytic {} vs fd {fd}",
                analytic[k]
            );
        }
    }

    #[test]
    fn zero_output_layer_gives_zero_field() {
        let field = small(true, 1);
        let class = ClassLabel::new(1, 2).unwrap();
        assert_eq!(field.forward(0.3, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0], class).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn construction_is_seeded() {
        assert_eq!(small(false, 5), small(false, 5));
        assert_ne!(small(false, 5), small(false, 6));
    }

    #[test]
    fn batch_rows_match_single_rows() {
        let field = small(false, 2);
        let (ts, xs, classes, _) = batch(7, 1);
        let all = field.forward_batch(&ts, xs.view(), &classes).unwrap();
        for r in 0..7 {
            let one = field.forward(ts[r], xs.row(r).as_slice().unwrap(), classes[r]).unwrap();
            assert_eq!(all.row(r).to_vec(), one);
        }
    }

    #[test]
    fn forward_rejects_bad_input() {
        let field = small(false, 2);
        let class = ClassLabel::new(0, 2).unwrap();
        assert!(field.forward(1.5, &[0.0; 6], class).is_err());
        assert!(field.forward(0.5, &[0.0; 5], class).is_err());
    }

    fn toy_data() -> Vec<LabeledTrajectory> {
        (0..4)
            .map(|k| LabeledTrajectory {
                trajectory: Trajectory::new(vec![k as f64 * 0.1; 6], 2).unwrap(),
                class: ClassLabel::new(k % 2, 2).unwrap(),
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let field = small(false, 8);
        let cfg = TrainConfig {
            steps: 5,
            batch_size: 4,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let out = train(field.clone(), &toy_data(), &cfg).unwrap();
        assert_eq!(out.field, field);
        assert_eq!(out.losses.len(), 5);
    }

    #[test]
    fn training_is_deterministic_and_descends() {
        let cfg = TrainConfig {
            steps: 300,
            batch_size: 16,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let a = train(small(false, 8), &toy_data(), &cfg).unwrap();
        let b = train(small(false, 8), &toy_data(), &cfg).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.field, b.field);
        let (first, last) = smoothed(&a.losses, 30);
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn learning_rate_schedule() {
        let cfg = TrainConfig {
            steps: 11,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.lr_at(0), cfg.learning_rate);
        assert!((cfg.lr_at(10) - cfg.learning_rate * cfg.min_lr_ratio).abs() < 1e-15);
        assert!(cfg.lr_at(5) < cfg.lr_at(4));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let field = small(false, 11);
        save_model(&field, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, field);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 8 + 5 * 4 + 3 * 8 + 8 * field.num_parameters());
    }

    #[test]
    fn checkpoint_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&small(false, 11), &path).unwrap();
        let good = fs::read(&path).unwrap();

        let write = |bytes: &[u8]| {
            fs::write(&path, bytes).unwrap();
            load_model(&path)
        };
        assert!(matches!(write(&good[..good.len() - 3]), Err(Error::Checkpoint { .. })));
        let mut extra = good.clone();
        extra.push(0);
        assert!(matches!(write(&extra), Err(Error::Checkpoint { .. })));
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(matches!(write(&magic), Err(Error::Checkpoint { .. })));
        let mut version = good.clone();
        version[8] = 9;
        assert!(matches!(write(&version), Err(Error::Checkpoint { .. })));
        let mut chain = good.clone();
        // first layer's input count
        chain[8 + 5 * 4 + 4] ^= 1;
        assert!(matches!(write(&chain), Err(Error::Dimension(_))));
        assert!(matches!(load_model(dir.path().join("missing.bin")), Err(Error::Io { .. })));
    }
}
