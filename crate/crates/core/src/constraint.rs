//! Safety functions `h(s) >= 0` over single waypoint states, and the
//! constraint records that attach them to waypoints.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::barrier::PhiSchedule;
use crate::error::{Error, Result};

/// A differentiable scalar safety function on the waypoint space.
///
/// The safe set is `{ s : value(s) >= 0 }`.
pub trait Barrier: fmt::Debug + Send + Sync {
    fn state_dim(&self) -> usize;

    fn value(&self, s: &[f64]) -> f64;

    /// Writes the gradient of [`Barrier::value`] at `s` into `out`.
    fn gradient_into(&self, s: &[f64], out: &mut [f64]);

    fn gradient(&self, s: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; s.len()];
        self.gradient_into(s, &mut g);
        g
    }

    /// A point of the safe set close to `s`; `s` itself when already safe.
    ///
    /// The default takes linearized (Newton) steps `s - h/|grad|^2 * grad`
    /// until the value is non-negative.
    fn project(&self, s: &[f64]) -> Vec<f64> {
        let mut p = s.to_vec();
        let mut g = vec![0.0; s.len()];
        for _ in 0..100 {
            let h = self.value(&p);
            if h >= 0.0 {
                break;
            }
            self.gradient_into(&p, &mut g);
            let gg: f64 = g.iter().map(|x| x * x).sum();
            if gg == 0.0 {
                break;
            }
            // overshoot slightly so the iteration lands on the safe side
            let step = -h / gg * (1.0 + 1e-12);
            p.iter_mut().zip(&g).for_each(|(x, gi)| *x += step * gi);
        }
        p
    }

    /// Geometry of a ball constraint, used for exact nearest-point projection.
    fn as_disk(&self) -> Option<&DiskBarrier> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiskKind {
    /// Stay outside: `h(s) = |s - c|^2 - r^2`.
    Keepout,
    /// Stay inside: `h(s) = r^2 - |s - c|^2`.
    Containment,
}

/// Ball keep-out or containment constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskBarrier {
    pub center: Vec<f64>,
    pub radius: f64,
    pub kind: DiskKind,
}

impl DiskBarrier {
    pub fn new(center: Vec<f64>, radius: f64, kind: DiskKind) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::Parameter("disk center must be non-empty".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Parameter(format!("disk radius must be positive, got {radius}")));
        }
        if center.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parameter("disk center must be finite".into()));
        }
        Ok(Self { center, radius, kind })
    }

    pub fn keepout(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::new(center, radius, DiskKind::Keepout)
    }

    pub fn containment(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::new(center, radius, DiskKind::Containment)
    }

    fn sign(&self) -> f64 {
        match self.kind {
            DiskKind::Keepout => 1.0,
            DiskKind::Containment => -1.0,
        }
    }

    pub fn distance_to_center(&self, s: &[f64]) -> f64 {
        s.iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            .sqrt()
    }

    /// Radial projection of `s` onto the circle. A point at the exact
    /// center goes along `+e_0`.
    pub fn radial_point(&self, s: &[f64]) -> Vec<f64> {
        let dist = self.distance_to_center(s);
        if dist == 0.0 {
            let mut p = self.center.clone();
            p[0] += self.radius;
            return p;
        }
        let scale = self.radius / dist;
        s.iter()
            .zip(&self.center)
            .map(|(a, c)| c + (a - c) * scale)
            .collect()
    }

    /// Moves a point lying (numerically) on the circle by a few ulps so that
    /// `value >= 0` holds in floating point.
    pub(crate) fn settle_on_safe_side(&self, mut p: Vec<f64>) -> Vec<f64> {
        let dir = self.sign();
        let mut ulps = 1.0;
        for _ in 0..64 {
            if self.value(&p) >= 0.0 {
                break;
            }
            let factor = 1.0 + dir * ulps * f64::EPSILON;
            for (a, c) in p.iter_mut().zip(&self.center) {
                *a = c + (*a - c) * factor;
            }
            ulps *= 2.0;
        }
        p
    }
}

impl Barrier for DiskBarrier {
    fn state_dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, s: &[f64]) -> f64 {
        let d2: f64 = s
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        self.sign() * (d2 - self.radius * self.radius)
    }

    fn gradient_into(&self, s: &[f64], out: &mut [f64]) {
        let k = 2.0 * self.sign();
        for ((o, a), c) in out.iter_mut().zip(s).zip(&self.center) {
            *o = k * (a - c);
        }
    }

    fn project(&self, s: &[f64]) -> Vec<f64> {
        if self.value(s) >= 0.0 {
            return s.to_vec();
        }
        self.settle_on_safe_side(self.radial_point(s))
    }

    fn as_disk(&self) -> Option<&DiskBarrier> {
        Some(self)
    }
}

/// Waypoints a constraint applies to.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum WaypointMask {
    #[default]
    All,
    First,
    Last,
    Indices(BTreeSet<usize>),
}

impl WaypointMask {
    pub fn contains(&self, i: usize, horizon: usize) -> bool {
        match self {
            WaypointMask::All => i <= horizon,
            WaypointMask::First => i == 0,
            WaypointMask::Last => i == horizon,
            WaypointMask::Indices(set) => i <= horizon && set.contains(&i),
        }
    }
}

/// A safety function bound to a waypoint mask and a class-K schedule.
#[derive(Debug, Clone)]
pub struct Constraint {
    barrier: Arc<dyn Barrier>,
    pub mask: WaypointMask,
    pub schedule: PhiSchedule,
}

impl Constraint {
    pub fn new(barrier: Arc<dyn Barrier>, mask: WaypointMask, schedule: PhiSchedule) -> Self {
        Self {
            barrier,
            mask,
            schedule,
        }
    }

    pub fn disk_keepout(center: [f64; 2], radius: f64, schedule: PhiSchedule) -> Result<Self> {
        Ok(Self::new(
            Arc::new(DiskBarrier::keepout(center.to_vec(), radius)?),
            WaypointMask::All,
            schedule,
        ))
    }

    pub fn disk_containment(
        center: [f64; 2],
        radius: f64,
        mask: WaypointMask,
        schedule: PhiSchedule,
    ) -> Result<Self> {
        Ok(Self::new(
            Arc::new(DiskBarrier::containment(center.to_vec(), radius)?),
            mask,
            schedule,
        ))
    }

    pub fn with_mask(mut self, mask: WaypointMask) -> Self {
        self.mask = mask;
        self
    }

    pub fn barrier(&self) -> &dyn Barrier {
        self.barrier.as_ref()
    }

    pub fn h(&self, s: &[f64]) -> f64 {
        self.barrier.value(s)
    }

    pub fn grad_h(&self, s: &[f64]) -> Vec<f64> {
        self.barrier.gradient(s)
    }

    pub fn applies_to(&self, i: usize, horizon: usize) -> bool {
        self.mask.contains(i, horizon)
    }
}
