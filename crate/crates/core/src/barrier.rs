//! Flow-matching barrier machinery.
//!
//! For a waypoint `s = E_i T_t` and a safety function `h`, the barrier
//! condition on the controlled flow `dT/dt = v + u` reads
//!
//! ```text
//!     b . u + a >= 0,    b = grad h(s),    a = b . (E_i v) + phi(t, h(s)) h(s)
//! ```
//!
//! where `phi` switches to a blow-up schedule on unsafe states so the
//! waypoint is driven into the safe set before `t = 1`. A single constraint
//! has a closed-form minimum-norm `u`; several constraints go through the
//! slack-relaxed QP in [`crate::qp`]. The terminal filter projects the final
//! state onto the safe set, which restores the hard guarantee that slacks and
//! time discretization may have weakened.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::constraint::{Barrier, Constraint, DiskBarrier};
use crate::error::{Error, Result};
use crate::flow::{Regularizer, StepCorrection};
use crate::qp::{self, QpProblem, QpRow};
use crate::trajectory::Trajectory;

/// `phi(t, h) = phi0` on safe states, `blowup_scale / (1 - t)` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiSchedule {
    pub phi0: f64,
    pub blowup_scale: f64,
}

impl Default for PhiSchedule {
    fn default() -> Self {
        Self::new(5.0).expect("default phi0 is positive")
    }
}

impl PhiSchedule {
    /// Schedule with `blowup_scale = phi0`, i.e. `phi1(t) = phi0 / (1 - t)`.
    pub fn new(phi0: f64) -> Result<Self> {
        Self::with_blowup(phi0, phi0)
    }

    pub fn with_blowup(phi0: f64, blowup_scale: f64) -> Result<Self> {
        if !(phi0 > 0.0 && phi0.is_finite()) {
            return Err(Error::Parameter(format!("phi0 must be positive, got {phi0}")));
        }
        if !(blowup_scale > 0.0 && blowup_scale.is_finite()) {
            return Err(Error::Parameter(format!(
                "blowup scale must be positive, got {blowup_scale}"
            )));
        }
        Ok(Self { phi0, blowup_scale })
    }

    /// The blow-up branch `phi1(t)`.
    pub fn blowup(&self, t: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::PhiDomain(t));
        }
        Ok(self.blowup_scale / (1.0 - t))
    }

    pub fn phi(&self, t: f64, h_value: f64) -> Result<f64> {
        let blow = self.blowup(t)?;
        Ok(if h_value >= 0.0 { self.phi0 } else { blow })
    }
}

pub fn phi(sched: &PhiSchedule, t: f64, h_value: f64) -> Result<f64> {
    sched.phi(t, h_value)
}

/// Minimum-norm `u` with `b . u + a >= 0`: zero when `a >= 0`, otherwise
/// `-a b / |b|^2`.
///
/// A vanishing gradient with `a < 0` admits no solution and is reported as
/// [`Error::DegenerateBarrier`].
pub fn closed_form_u(b: &[f64], a: f64) -> Result<Vec<f64>> {
    if a >= 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    let bb: f64 = b.iter().map(|x| x * x).sum();
    if bb == 0.0 {
        return Err(Error::DegenerateBarrier { a });
    }
    Ok(b.iter().map(|bi| -a * bi / bb).collect())
}

/// The auxiliary pair `(a, b)` of constraint `constraint` at waypoint `i`.
pub fn compute_a_b(
    constraint: &Constraint,
    traj: &Trajectory,
    i: usize,
    velocity: &[f64],
    t: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut b = vec![0.0; traj.state_dim()];
    let a = a_b_into(constraint, traj, i, velocity, t, &mut b)?;
    Ok((a, b))
}

fn a_b_into(
    constraint: &Constraint,
    traj: &Trajectory,
    i: usize,
    velocity: &[f64],
    t: f64,
    b: &mut [f64],
) -> Result<f64> {
    if velocity.len() != traj.dim() {
        return Err(Error::Dimension(format!(
            "velocity has length {}, trajectory has {}",
            velocity.len(),
            traj.dim()
        )));
    }
    let s = traj.select_waypoint(i)?;
    let ds = traj.state_dim();
    let v_block = &velocity[i * ds..(i + 1) * ds];
    let barrier = constraint.barrier();
    let h = barrier.value(s);
    barrier.gradient_into(s, b);
    let drift: f64 = b.iter().zip(v_block).map(|(x, y)| x * y).sum();
    let a = drift + constraint.schedule.phi(t, h)? * h;
    if !a.is_finite() || b.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parameter(format!(
            "non-finite barrier data at waypoint {i}, t = {t}"
        )));
    }
    Ok(a)
}

/// Output of [`regularize_step_single`].
#[derive(Debug, Clone, PartialEq)]
pub struct SingleStep {
    pub u: Vec<f64>,
    /// Waypoints where `b = 0` and `a < 0`; their block of `u` is zero.
    pub degenerate: Vec<usize>,
}

/// Minimum-norm stacked `u` for one constraint. The stacked QP decouples per
/// waypoint because `|u|^2 = sum_i |u^i|^2`.
pub fn regularize_step_single(
    constraint: &Constraint,
    traj: &Trajectory,
    velocity: &[f64],
    t: f64,
) -> Result<SingleStep> {
    let ds = traj.state_dim();
    let horizon = traj.horizon();
    let mut u = vec![0.0; traj.dim()];
    let mut degenerate = Vec::new();
    let mut b = vec![0.0; ds];
    for i in 0..=horizon {
        if !constraint.applies_to(i, horizon) {
            continue;
        }
        let a = a_b_into(constraint, traj, i, velocity, t, &mut b)?;
        match closed_form_u(&b, a) {
            Ok(ui) => u[i * ds..(i + 1) * ds].copy_from_slice(&ui),
            Err(Error::DegenerateBarrier { a }) => {
                warn!("waypoint {i} at t = {t}: vanishing barrier gradient with a = {a}; u = 0");
                degenerate.push(i);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SingleStep { u, degenerate })
}

/// Data of one relaxed barrier row at a step: `b . (E_i v + u^i) + phi h + delta = b . u^i + a + delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCertificate {
    pub waypoint: usize,
    pub constraint: usize,
    pub a: f64,
    pub b: Vec<f64>,
    pub u: Vec<f64>,
    pub slack: f64,
}

impl StepCertificate {
    pub fn residual(&self) -> f64 {
        self.b.iter().zip(&self.u).map(|(x, y)| x * y).sum::<f64>() + self.a + self.slack
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeStep {
    pub u: Vec<f64>,
    /// Slacks in certificate order.
    pub slacks: Vec<f64>,
    pub certificates: Vec<StepCertificate>,
}

/// Per-waypoint relaxed QP over all constraints whose masks cover the waypoint.
pub fn regularize_step_composite(
    constraints: &[Constraint],
    traj: &Trajectory,
    velocity: &[f64],
    t: f64,
) -> Result<CompositeStep> {
    if constraints.is_empty() {
        return Err(Error::Parameter("composite regularizer needs at least one constraint".into()));
    }
    let ds = traj.state_dim();
    let horizon = traj.horizon();
    let mut u = vec![0.0; traj.dim()];
    let mut slacks = Vec::new();
    let mut certificates = Vec::new();
    let mut rows = Vec::with_capacity(constraints.len());
    let mut indices = Vec::with_capacity(constraints.len());
    for i in 0..=horizon {
        rows.clear();
        indices.clear();
        for (j, c) in constraints.iter().enumerate() {
            if c.applies_to(i, horizon) {
                let mut b = vec![0.0; ds];
                let a = a_b_into(c, traj, i, velocity, t, &mut b)?;
                rows.push(QpRow { b, a });
                indices.push(j);
            }
        }
        if rows.is_empty() {
            continue;
        }
        let (ui, di) = if rows.iter().all(|r| r.a >= 0.0) {
            // zero is feasible and has zero cost
            (vec![0.0; ds], vec![0.0; rows.len()])
        } else {
            let problem = QpProblem::new(ds, rows.clone())?;
            let sol = qp::solve(&problem).map_err(|e| Error::WaypointQp {
                waypoint: i,
                t,
                source: Box::new(e),
            })?;
            (sol.u, sol.slack)
        };
        u[i * ds..(i + 1) * ds].copy_from_slice(&ui);
        for ((row, &j), d) in rows.iter().zip(&indices).zip(&di) {
            slacks.push(*d);
            certificates.push(StepCertificate {
                waypoint: i,
                constraint: j,
                a: row.a,
                b: row.b.clone(),
                u: ui.clone(),
                slack: *d,
            });
        }
    }
    Ok(CompositeStep {
        u,
        slacks,
        certificates,
    })
}

const PROJECTION_ITERATIONS: usize = 100;

/// Nearest safe trajectory to `traj`, computed waypoint by waypoint.
///
/// Waypoints covered only by planar disk constraints are projected exactly:
/// the nearest point of a feasible set bounded by circular arcs is the point
/// itself, a radial projection onto one circle, or an intersection of two
/// circles, so the nearest feasible candidate among those is the optimum.
/// Other barriers use alternating projection onto the most violated
/// constraint (at most 100 rounds). Returns an error instead of an unsafe
/// waypoint.
pub fn terminal_filter(constraints: &[Constraint], traj: &Trajectory) -> Result<Trajectory> {
    let horizon = traj.horizon();
    let mut out = traj.clone();
    let mut active: Vec<&dyn Barrier> = Vec::with_capacity(constraints.len());
    for i in 0..=horizon {
        active.clear();
        active.extend(
            constraints
                .iter()
                .filter(|c| c.applies_to(i, horizon))
                .map(|c| c.barrier()),
        );
        let s = traj.select_waypoint(i)?;
        if active.iter().all(|b| b.value(s) >= 0.0) {
            continue;
        }
        let projected = project_waypoint(&active, s, i)?;
        out.waypoint_mut(i).copy_from_slice(&projected);
    }
    Ok(out)
}

fn min_value(active: &[&dyn Barrier], p: &[f64]) -> f64 {
    active
        .iter()
        .map(|b| b.value(p))
        .fold(f64::INFINITY, f64::min)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest point to `s` satisfying every barrier in `active`.
pub fn project_waypoint(active: &[&dyn Barrier], s: &[f64], waypoint: usize) -> Result<Vec<f64>> {
    if min_value(active, s) >= 0.0 {
        return Ok(s.to_vec());
    }
    let disks: Option<Vec<&DiskBarrier>> = active.iter().map(|b| b.as_disk()).collect();
    let candidate = match disks {
        Some(d) if s.len() == 2 => nearest_disk_candidate(&d, s),
        _ => alternating_projection(active, s),
    };
    let p = settle(active, candidate);
    let min_h = min_value(active, &p);
    if min_h >= 0.0 {
        Ok(p)
    } else {
        Err(Error::ProjectionFailed {
            waypoint,
            min_h,
            iterations: PROJECTION_ITERATIONS,
        })
    }
}

fn nearest_disk_candidate(disks: &[&DiskBarrier], s: &[f64]) -> Vec<f64> {
    const ACCEPT: f64 = -1e-12;
    let mut candidates: Vec<Vec<f64>> = disks.iter().map(|d| d.radial_point(s)).collect();
    for (k, d1) in disks.iter().enumerate() {
        for d2 in &disks[k + 1..] {
            candidates.extend(circle_intersections(d1, d2));
        }
    }
    let feasible = |p: &[f64]| {
        disks
            .iter()
            .all(|d| d.value(p) >= ACCEPT * d.radius * d.radius)
    };
    candidates
        .into_iter()
        .filter(|p| feasible(p))
        .min_by(|p, q| sq_dist(p, s).total_cmp(&sq_dist(q, s)))
        .unwrap_or_else(|| s.to_vec())
}

fn circle_intersections(c1: &DiskBarrier, c2: &DiskBarrier) -> Vec<Vec<f64>> {
    let dx = c2.center[0] - c1.center[0];
    let dy = c2.center[1] - c1.center[1];
    let d = (dx * dx + dy * dy).sqrt();
    let (r1, r2) = (c1.radius, c2.radius);
    if d == 0.0 || d > r1 + r2 || d < (r1 - r2).abs() {
        return Vec::new();
    }
    let along = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let across = (r1 * r1 - along * along).max(0.0).sqrt();
    let (ex, ey) = (dx / d, dy / d);
    let mx = c1.center[0] + along * ex;
    let my = c1.center[1] + along * ey;
    vec![
        vec![mx - across * ey, my + across * ex],
        vec![mx + across * ey, my - across * ex],
    ]
}

fn alternating_projection(active: &[&dyn Barrier], s: &[f64]) -> Vec<f64> {
    let mut p = s.to_vec();
    for _ in 0..PROJECTION_ITERATIONS {
        let worst = active
            .iter()
            .map(|b| (b.value(&p), b))
            .min_by(|x, y| x.0.total_cmp(&y.0));
        match worst {
            Some((h, b)) if h < 0.0 => p = b.project(&p),
            _ => break,
        }
    }
    p
}

/// Removes rounding-level violations (e.g. at a corner where two circles
/// meet) by stepping along the summed unit normals of the violated and
/// nearly active barriers, so a corner is left into the feasible wedge.
fn settle(active: &[&dyn Barrier], mut p: Vec<f64>) -> Vec<f64> {
    let scale = 1.0 + p.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let near = 1e-9 * scale * scale;
    let mut step = f64::EPSILON * scale;
    let mut dir = vec![0.0; p.len()];
    let mut g = vec![0.0; p.len()];
    for _ in 0..40 {
        if min_value(active, &p) >= 0.0 {
            break;
        }
        dir.fill(0.0);
        for b in active {
            if b.value(&p) < near {
                b.gradient_into(&p, &mut g);
                let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    dir.iter_mut().zip(&g).for_each(|(d, gi)| *d += gi / norm);
                }
            }
        }
        let dn = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if dn == 0.0 {
            break;
        }
        p.iter_mut().zip(&dir).for_each(|(x, d)| *x += step * d / dn);
        step *= 2.0;
    }
    p
}

/// Closed-form regularizer for exactly one constraint.
#[derive(Debug, Clone)]
pub struct ClosedFormRegularizer {
    constraint: Constraint,
}

impl ClosedFormRegularizer {
    pub fn new(constraint: Constraint) -> Self {
        Self { constraint }
    }
}

impl Regularizer for ClosedFormRegularizer {
    fn correction(&self, t: f64, traj: &Trajectory, velocity: &[f64]) -> Result<StepCorrection> {
        let step = regularize_step_single(&self.constraint, traj, velocity, t)?;
        Ok(StepCorrection {
            u: step.u,
            slacks: Vec::new(),
            certificates: Vec::new(),
            degenerate: step.degenerate,
        })
    }

    fn terminal(&self, traj: &Trajectory) -> Result<Trajectory> {
        terminal_filter(std::slice::from_ref(&self.constraint), traj)
    }
}

/// Relaxed-QP regularizer for any number of constraints.
#[derive(Debug, Clone)]
pub struct CompositeRegularizer {
    constraints: Vec<Constraint>,
}

impl CompositeRegularizer {
    pub fn new(constraints: Vec<Constraint>) -> Result<Self> {
        if constraints.is_empty() {
            return Err(Error::Parameter("composite regularizer needs at least one constraint".into()));
        }
        Ok(Self { constraints })
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }
}

impl Regularizer for CompositeRegularizer {
    fn correction(&self, t: f64, traj: &Trajectory, velocity: &[f64]) -> Result<StepCorrection> {
        let step = regularize_step_composite(&self.constraints, traj, velocity, t)?;
        Ok(StepCorrection {
            u: step.u,
            slacks: step.slacks,
            certificates: step.certificates,
            degenerate: Vec::new(),
        })
    }

    fn terminal(&self, traj: &Trajectory) -> Result<Trajectory> {
        terminal_filter(&self.constraints, traj)
    }
}

/// Smallest `h_j` over all masked (waypoint, constraint) pairs.
pub fn min_barrier_value(constraints: &[Constraint], traj: &Trajectory) -> f64 {
    let horizon = traj.horizon();
    let mut m = f64::INFINITY;
    for (i, s) in traj.waypoints().enumerate() {
        for c in constraints {
            if c.applies_to(i, horizon) {
                m = m.min(c.h(s));
            }
        }
    }
    m
}

/// Closed-form regularizer for one constraint, relaxed QP for several, none for zero.
pub fn regularizer_for(mut constraints: Vec<Constraint>) -> Result<Option<Box<dyn Regularizer>>> {
    Ok(match constraints.len() {
        0 => None,
        1 => Some(Box::new(ClosedFormRegularizer::new(constraints.remove(0)))),
        _ => Some(Box::new(CompositeRegularizer::new(constraints)?)),
    })
}
