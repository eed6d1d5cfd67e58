//! Fixed-step ODE sampling of `dT/dt = v(t, T) + u_t` from `t = 0` to `t = 1`.
//!
//! The correction `u_t` comes from a [`Regularizer`] evaluated at the start
//! of every step (never at `t = 1`) and is held constant through that step,
//! including the RK4 substages. After the last step the regularizer's
//! terminal filter maps the pre-projection state `T_{1-}` to `T_1`.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::barrier::StepCertificate;
use crate::error::{Error, Result};
use crate::rng::{class_stream, stream_rng};
use crate::trajectory::{ClassLabel, Trajectory};

/// A (possibly learned) velocity field over stacked trajectories.
pub trait VelocityField: Send + Sync {
    /// Trajectory dimension `d`.
    fn dim(&self) -> usize;

    /// Velocities for each row of `xs` at flow time `t`.
    fn velocity_batch(&self, t: f64, xs: ArrayView2<'_, f64>, class: ClassLabel) -> Result<Array2<f64>>;
}

/// The per-step correction and its bookkeeping.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepCorrection {
    pub u: Vec<f64>,
    pub slacks: Vec<f64>,
    pub certificates: Vec<StepCertificate>,
    /// Waypoints whose barrier gradient vanished while unsafe (u = 0 there).
    pub degenerate: Vec<usize>,
}

impl StepCorrection {
    pub fn zero(dim: usize) -> Self {
        Self {
            u: vec![0.0; dim],
            ..Self::default()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.u.iter().all(|x| *x == 0.0)
    }
}

/// Safety steering of the flow.
pub trait Regularizer: Send + Sync {
    /// Correction `u_t` for state `traj` with field velocity `velocity`, `0 <= t < 1`.
    fn correction(&self, t: f64, traj: &Trajectory, velocity: &[f64]) -> Result<StepCorrection>;

    /// Filter applied to the final state.
    fn terminal(&self, traj: &Trajectory) -> Result<Trajectory>;
}

/// Regularizer that never intervenes.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullRegularizer;

impl Regularizer for NullRegularizer {
    fn correction(&self, _t: f64, traj: &Trajectory, _velocity: &[f64]) -> Result<StepCorrection> {
        Ok(StepCorrection::zero(traj.dim()))
    }

    fn terminal(&self, traj: &Trajectory) -> Result<Trajectory> {
        Ok(traj.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Euler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ode_steps: usize,
    pub solver: Solver,
    pub horizon: usize,
    pub state_dim: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ode_steps: 100,
            solver: Solver::Euler,
            horizon: 99,
            state_dim: 2,
            seed: 2,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ode_steps < 2 {
            return Err(Error::Parameter(format!(
                "ode_steps must be at least 2, got {}",
                self.ode_steps
            )));
        }
        if self.state_dim == 0 {
            return Err(Error::Parameter("state_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn trajectory_dim(&self) -> usize {
        self.state_dim * (self.horizon + 1)
    }

    /// Grid point `k` of `t_k = k / K`; `t_K` is exactly 1.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.ode_steps as f64
    }
}

/// Everything recorded in one sampling run.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRun {
    pub times: Vec<f64>,
    /// `snapshots[0]` is the prior draw, `snapshots[K]` the returned trajectory.
    pub snapshots: Vec<Trajectory>,
    /// Correction applied during step `k` (computed at `times[k]`).
    pub corrections: Vec<StepCorrection>,
    /// State at the last grid point before the terminal filter.
    pub pre_projection: Trajectory,
    /// `T_1 - T_{1-}`.
    pub projection_delta: Vec<f64>,
}

impl FlowRun {
    pub fn output(&self) -> &Trajectory {
        self.snapshots.last().expect("a run has at least two snapshots")
    }
}

/// Standard normal draw of dimension `d`.
pub fn sample_prior<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn check_dims<F: VelocityField + ?Sized>(field: &F, cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    if field.dim() != cfg.trajectory_dim() {
        return Err(Error::Dimension(format!(
            "field dimension {} differs from configured trajectory dimension {}",
            field.dim(),
            cfg.trajectory_dim()
        )));
    }
    Ok(())
}

/// One run from a fresh prior draw taken from `rng`.
pub fn integrate<F: VelocityField + ?Sized, R: Rng + ?Sized>(
    field: &F,
    class: ClassLabel,
    regularizer: Option<&dyn Regularizer>,
    cfg: &RunConfig,
    rng: &mut R,
) -> Result<FlowRun> {
    check_dims(field, cfg)?;
    let noise = sample_prior(cfg.trajectory_dim(), rng);
    integrate_from(field, class, regularizer, cfg, noise)
}

/// One run from the given initial state.
pub fn integrate_from<F: VelocityField + ?Sized>(
    field: &F,
    class: ClassLabel,
    regularizer: Option<&dyn Regularizer>,
    cfg: &RunConfig,
    initial: Vec<f64>,
) -> Result<FlowRun> {
    check_dims(field, cfg)?;
    let d = cfg.trajectory_dim();
    if initial.len() != d {
        return Err(Error::Dimension(format!(
            "initial state has length {}, expected {d}",
            initial.len()
        )));
    }
    let states = Array2::from_shape_vec((1, d), initial).map_err(|e| Error::Dimension(e.to_string()))?;
    let mut recorder = Recorder::new(cfg.state_dim);
    let mut out = run_batch(field, class, regularizer, cfg, states, Some(&mut recorder))?;
    let final_traj = out.pop().expect("one row");
    let pre = recorder.pre.expect("recorded");
    let projection_delta = final_traj
        .as_slice()
        .iter()
        .zip(pre.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    recorder.snapshots.push(final_traj);
    Ok(FlowRun {
        times: (0..=cfg.ode_steps).map(|k| cfg.time(k)).collect(),
        snapshots: recorder.snapshots,
        corrections: recorder.corrections,
        pre_projection: pre,
        projection_delta,
    })
}

/// `n` runs for `class`; run `k` draws its prior from
/// `stream_rng(cfg.seed, class_stream(class, k))`.
pub fn batch_sample<F: VelocityField + ?Sized>(
    field: &F,
    class: ClassLabel,
    regularizer: Option<&dyn Regularizer>,
    n: usize,
    cfg: &RunConfig,
) -> Result<Vec<Trajectory>> {
    if n == 0 {
        return Err(Error::Parameter("batch_sample needs n >= 1".into()));
    }
    check_dims(field, cfg)?;
    let d = cfg.trajectory_dim();
    let mut states = Array2::zeros((n, d));
    for (k, mut row) in states.outer_iter_mut().enumerate() {
        let mut rng = sample_rng(cfg.seed, class, k);
        for x in row.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
    }
    run_batch(field, class, regularizer, cfg, states, None)
}

/// The random stream used for run `index` of `class` by [`batch_sample`].
pub fn sample_rng(seed: u64, class: ClassLabel, index: usize) -> crate::rng::StreamRng {
    stream_rng(seed, class_stream(class.id(), index))
}

struct Recorder {
    state_dim: usize,
    snapshots: Vec<Trajectory>,
    corrections: Vec<StepCorrection>,
    pre: Option<Trajectory>,
}

impl Recorder {
    fn new(state_dim: usize) -> Self {
        Self {
            state_dim,
            snapshots: Vec::new(),
            corrections: Vec::new(),
            pre: None,
        }
    }

    fn snapshot(&mut self, states: &Array2<f64>) {
        self.snapshots
            .push(Trajectory::from_raw(states.row(0).to_vec(), self.state_dim));
    }
}

fn add_rows(dst: &mut Array2<f64>, src: &Array2<f64>, scale: f64) {
    ndarray::Zip::from(dst).and(src).for_each(|x, &y| *x += scale * y);
}

/// Lockstep integration of every row of `states`. Rows never interact: each
/// row's correction depends only on that row.
fn run_batch<F: VelocityField + ?Sized>(
    field: &F,
    class: ClassLabel,
    regularizer: Option<&dyn Regularizer>,
    cfg: &RunConfig,
    mut states: Array2<f64>,
    mut recorder: Option<&mut Recorder>,
) -> Result<Vec<Trajectory>> {
    let steps = cfg.ode_steps;
    let h = 1.0 / steps as f64;
    let rows = states.nrows();
    let ds = cfg.state_dim;
    if let Some(rec) = recorder.as_deref_mut() {
        rec.snapshot(&states);
    }
    for k in 0..steps {
        let t = cfg.time(k);
        let v = field.velocity_batch(t, states.view(), class)?;
        let mut u: Option<Array2<f64>> = None;
        if let Some(reg) = regularizer {
            for r in 0..rows {
                let traj = Trajectory::from_raw(states.row(r).to_vec(), ds);
                let vel = v.row(r);
                let corr = reg.correction(t, &traj, vel.as_slice().expect("standard layout"))?;
                if !corr.is_zero() {
                    let buf = u.get_or_insert_with(|| Array2::zeros((rows, states.ncols())));
                    buf.row_mut(r)
                        .iter_mut()
                        .zip(&corr.u)
                        .for_each(|(dst, src)| *dst = *src);
                }
                if let Some(rec) = recorder.as_deref_mut() {
                    rec.corrections.push(corr);
                }
            }
        } else if let Some(rec) = recorder.as_deref_mut() {
            rec.corrections.push(StepCorrection::zero(states.ncols()));
        }

        let mut k1 = v;
        if let Some(u) = &u {
            k1 += u;
        }
        match cfg.solver {
            Solver::Euler => add_rows(&mut states, &k1, h),
            Solver::Rk4 => {
                let stage = |base: &Array2<f64>, slope: &Array2<f64>, scale: f64, ts: f64| -> Result<Array2<f64>> {
                    let mut x = base.clone();
                    add_rows(&mut x, slope, scale);
                    let mut out = field.velocity_batch(ts, x.view(), class)?;
                    if let Some(u) = &u {
                        out += u;
                    }
                    Ok(out)
                };
                let k2 = stage(&states, &k1, 0.5 * h, t + 0.5 * h)?;
                let k3 = stage(&states, &k2, 0.5 * h, t + 0.5 * h)?;
                let k4 = stage(&states, &k3, h, cfg.time(k + 1))?;
                ndarray::Zip::from(&mut states)
                    .and(&k1)
                    .and(&k2)
                    .and(&k3)
                    .and(&k4)
                    .for_each(|x, &a, &b, &c, &e| *x += h / 6.0 * (a + 2.0 * b + 2.0 * c + e));
            }
        }
        if states.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                step: k,
                t: cfg.time(k + 1),
            });
        }
        if k + 1 < steps {
            if let Some(rec) = recorder.as_deref_mut() {
                rec.snapshot(&states);
            }
        }
    }

    let mut out = Vec::with_capacity(rows);
    for (r, row) in states.outer_iter().enumerate() {
        let pre = Trajectory::from_raw(row.to_vec(), ds);
        let finished = match regularizer {
            Some(reg) => reg.terminal(&pre).map_err(|e| Error::Sample {
                index: r,
                source: Box::new(e),
            })?,
            None => pre.clone(),
        };
        if let Some(rec) = recorder.as_deref_mut() {
            rec.pre = Some(pre);
        }
        out.push(finished);
    }
    Ok(out)
}
