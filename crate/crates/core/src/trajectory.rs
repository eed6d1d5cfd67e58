//! Stacked trajectory representation.
//!
//! A trajectory of horizon `H` holds `H + 1` waypoints of dimension `d_s`,
//! stored waypoint-major in a single flat vector of length `d_s * (H + 1)`.
//! The flow ODE treats this vector as its state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    data: Vec<f64>,
    state_dim: usize,
}

impl Trajectory {
    /// Wraps `data` as waypoints of dimension `state_dim`.
    pub fn new(data: Vec<f64>, state_dim: usize) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::Parameter("state_dim must be positive".into()));
        }
        if data.is_empty() || data.len() % state_dim != 0 {
            return Err(Error::Dimension(format!(
                "data length {} is not a positive multiple of state_dim {}",
                data.len(),
                state_dim
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parameter("trajectory contains non-finite values".into()));
        }
        Ok(Self { data, state_dim })
    }

    pub fn zeros(horizon: usize, state_dim: usize) -> Self {
        assert!(state_dim > 0);
        Self {
            data: vec![0.0; state_dim * (horizon + 1)],
            state_dim,
        }
    }

    pub(crate) fn from_raw(data: Vec<f64>, state_dim: usize) -> Self {
        debug_assert!(state_dim > 0 && data.len() % state_dim == 0);
        Self { data, state_dim }
    }

    /// Index of the last waypoint.
    pub fn horizon(&self) -> usize {
        self.data.len() / self.state_dim - 1
    }

    pub fn num_waypoints(&self) -> usize {
        self.data.len() / self.state_dim
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Total flattened dimension `d`.
    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn waypoints(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.state_dim)
    }

    /// Block `i` of the stacked vector (the action of the selection matrix `E_i`).
    pub fn select_waypoint(&self, i: usize) -> Result<&[f64]> {
        let horizon = self.horizon();
        if i > horizon {
            return Err(Error::Range { index: i, horizon });
        }
        let ds = self.state_dim;
        Ok(&self.data[i * ds..(i + 1) * ds])
    }

    /// Returns a copy with block `i` incremented by `delta` (the adjoint `E_i^T`).
    pub fn scatter_waypoint(&self, i: usize, delta: &[f64]) -> Result<Trajectory> {
        let mut out = self.clone();
        out.scatter_in_place(i, delta)?;
        Ok(out)
    }

    pub fn scatter_in_place(&mut self, i: usize, delta: &[f64]) -> Result<()> {
        let horizon = self.horizon();
        if i > horizon {
            return Err(Error::Range { index: i, horizon });
        }
        if delta.len() != self.state_dim {
            return Err(Error::Dimension(format!(
                "delta has length {}, expected {}",
                delta.len(),
                self.state_dim
            )));
        }
        if delta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parameter("delta contains non-finite values".into()));
        }
        let ds = self.state_dim;
        for (x, d) in self.data[i * ds..(i + 1) * ds].iter_mut().zip(delta) {
            *x += d;
        }
        Ok(())
    }

    pub(crate) fn waypoint_mut(&mut self, i: usize) -> &mut [f64] {
        let ds = self.state_dim;
        &mut self.data[i * ds..(i + 1) * ds]
    }
}

/// Selects waypoint `index` of a trajectory. Carries no matrix; selection is block indexing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaypointSelector {
    pub index: usize,
}

impl WaypointSelector {
    pub fn new(index: usize) -> Self {
        Self { index }
    }

    pub fn select<'a>(&self, traj: &'a Trajectory) -> Result<&'a [f64]> {
        traj.select_waypoint(self.index)
    }

    pub fn scatter(&self, traj: &Trajectory, delta: &[f64]) -> Result<Trajectory> {
        traj.scatter_waypoint(self.index, delta)
    }
}

/// Conditioning class for generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassLabel(usize);

impl ClassLabel {
    pub fn new(id: usize, num_classes: usize) -> Result<Self> {
        if id >= num_classes {
            return Err(Error::Parameter(format!(
                "class id {id} outside 0..{num_classes}"
            )));
        }
        Ok(Self(id))
    }

    pub fn id(self) -> usize {
        self.0
    }

    /// Writes the one-hot encoding into `out` (length = class count).
    pub fn one_hot_into(self, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        out[self.0] = 1.0;
    }

    pub fn one_hot(self, num_classes: usize) -> Vec<f64> {
        let mut v = vec![0.0; num_classes];
        self.one_hot_into(&mut v);
        v
    }
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
