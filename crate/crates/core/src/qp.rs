//! Dense active-set solver for the slack-relaxed per-waypoint barrier QP
//!
//! ```text
//!     minimize    |u|^2 + sum_j delta_j^2
//!     subject to  b_j . u + a_j + delta_j >= 0,   delta_j >= 0,   j = 1..N
//! ```
//!
//! The variable is `x = (u, delta)` of dimension `n = d_s + N` and the Hessian
//! is the identity, so the problem is the Euclidean projection of the origin
//! onto a polyhedron. Every equality-constrained subproblem of the primal
//! active-set iteration is then `x = G_W^T mu` with `(G_W G_W^T) mu = h_W`,
//! a linear solve of the size of the working set.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const STEP_TOL: f64 = 1e-13;
const MULTIPLIER_TOL: f64 = 1e-12;
const MAX_CHANGES: usize = 100;

/// One relaxed barrier row `b . u + a + delta >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpRow {
    pub b: Vec<f64>,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    state_dim: usize,
    rows: Vec<QpRow>,
}

impl QpProblem {
    pub fn new(state_dim: usize, rows: Vec<QpRow>) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::Parameter("QP state dimension must be positive".into()));
        }
        if rows.is_empty() {
            return Err(Error::Parameter("QP needs at least one constraint row".into()));
        }
        for (j, r) in rows.iter().enumerate() {
            if r.b.len() != state_dim {
                return Err(Error::Dimension(format!(
                    "row {j}: gradient has length {}, expected {state_dim}",
                    r.b.len()
                )));
            }
            if !r.a.is_finite() || r.b.iter().any(|x| !x.is_finite()) {
                return Err(Error::Parameter(format!("row {j} has non-finite data")));
            }
        }
        Ok(Self { state_dim, rows })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn rows(&self) -> &[QpRow] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Number of variables, `d_s + N`.
    pub fn num_vars(&self) -> usize {
        self.state_dim + self.rows.len()
    }

    /// Constraint `k` as `(g_k, h_k)` with `g_k . x >= h_k`.
    /// Indices `0..N` are the relaxed barrier rows, `N..2N` the slack bounds.
    fn constraint(&self, k: usize) -> (Vec<f64>, f64) {
        let n = self.num_vars();
        let m = self.state_dim;
        let nr = self.rows.len();
        let mut g = vec![0.0; n];
        if k < nr {
            g[..m].copy_from_slice(&self.rows[k].b);
            g[m + k] = 1.0;
            (g, -self.rows[k].a)
        } else {
            g[m + k - nr] = 1.0;
            (g, 0.0)
        }
    }

    /// Objective `|u|^2 + |delta|^2`.
    pub fn objective(&self, u: &[f64], slack: &[f64]) -> f64 {
        u.iter().chain(slack).map(|x| x * x).sum()
    }

    /// Residuals `b_j . u + a_j + delta_j` (non-negative when feasible).
    pub fn residuals(&self, u: &[f64], slack: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(slack)
            .map(|(r, d)| dot(&r.b, u) + r.a + d)
            .collect()
    }

    /// Remark-style feasible starting point: `u = 0`, `delta_j = max(0, -a_j)`.
    pub fn trivially_feasible_point(&self) -> (Vec<f64>, Vec<f64>) {
        (
            vec![0.0; self.state_dim],
            self.rows.iter().map(|r| (-r.a).max(0.0)).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: Vec<f64>,
    pub slack: Vec<f64>,
    /// Active constraint indices at the optimum: `j < N` for barrier row `j`,
    /// `N + j` for the bound `delta_j >= 0`.
    pub active: Vec<usize>,
    /// Lagrange multipliers for all `2N` constraints (zero when inactive).
    pub multipliers: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// KKT residuals of a candidate solution (all zero at an exact optimum).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub stationarity: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal
            .max(self.dual)
            .max(self.stationarity)
            .max(self.complementarity)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimum-norm point `G_W^T mu` on the affine set `G_W x = h_W`.
fn equality_minimizer(gs: &[Vec<f64>], hs: &[f64], n: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    if gs.is_empty() {
        return Some((vec![0.0; n], Vec::new()));
    }
    let w = gs.len();
    let gram = DMatrix::from_fn(w, w, |r, c| dot(&gs[r], &gs[c]));
    let rhs = DVector::from_column_slice(hs);
    let mu = gram.cholesky()?.solve(&rhs);
    let mut x = vec![0.0; n];
    for (g, m) in gs.iter().zip(mu.iter()) {
        for (xi, gi) in x.iter_mut().zip(g) {
            *xi += m * gi;
        }
    }
    Some((x, mu.iter().copied().collect()))
}

/// Solves the relaxed QP with a primal active-set method.
///
/// Starts from the trivially feasible point with an empty working set. Each
/// iteration either adds a blocking constraint or drops the one with the most
/// negative multiplier; at most 100 working-set changes are allowed.
pub fn solve(problem: &QpProblem) -> Result<QpSolution> {
    let n = problem.num_vars();
    let m = problem.state_dim;
    let nr = problem.num_rows();
    let total = 2 * nr;
    let cons: Vec<(Vec<f64>, f64)> = (0..total).map(|k| problem.constraint(k)).collect();

    let (u0, d0) = problem.trivially_feasible_point();
    let mut x: Vec<f64> = u0.into_iter().chain(d0).collect();
    let mut working: Vec<usize> = Vec::new();

    for iteration in 0..=MAX_CHANGES {
        let gs: Vec<Vec<f64>> = working.iter().map(|&k| cons[k].0.clone()).collect();
        let hs: Vec<f64> = working.iter().map(|&k| cons[k].1).collect();
        let (target, mu) = equality_minimizer(&gs, &hs, n).ok_or_else(|| {
            Error::QpNonConvergence {
                iterations: iteration,
                primal: primal_residual(&cons, &x),
            }
        })?;
        let p: Vec<f64> = target.iter().zip(&x).map(|(t, xi)| t - xi).collect();
        let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();

        if p_norm <= STEP_TOL * (1.0 + x_norm) {
            // objective |x|^2 has gradient 2x = sum lambda_k g_k
            let lambdas: Vec<f64> = mu.iter().map(|v| 2.0 * v).collect();
            let most_negative = lambdas
                .iter()
                .enumerate()
                .filter(|(_, l)| **l < -MULTIPLIER_TOL)
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(pos, _)| pos);
            match most_negative {
                Some(pos) => {
                    x = target;
                    working.remove(pos);
                    continue;
                }
                None => {
                    let mut multipliers = vec![0.0; total];
                    for (&k, l) in working.iter().zip(&lambdas) {
                        multipliers[k] = l.max(0.0);
                    }
                    let mut active = working.clone();
                    active.sort_unstable();
                    let mut u = target[..m].to_vec();
                    let mut slack = target[m..].to_vec();
                    // remove rounding noise below the bounds
                    for d in slack.iter_mut() {
                        if *d < 0.0 {
                            *d = 0.0;
                        }
                    }
                    polish_feasibility(problem, &mut u, &mut slack);
                    let objective = problem.objective(&u, &slack);
                    return Ok(QpSolution {
                        u,
                        slack,
                        active,
                        multipliers,
                        objective,
                        iterations: iteration,
                    });
                }
            }
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for (k, (g, h)) in cons.iter().enumerate() {
            if working.contains(&k) {
                continue;
            }
            let gp = dot(g, &p);
            if gp < -1e-15 {
                let ratio = ((h - dot(g, &x)) / gp).max(0.0);
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(k);
                }
            }
        }
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        if let Some(k) = blocking {
            working.push(k);
        }
    }

    Err(Error::QpNonConvergence {
        iterations: MAX_CHANGES,
        primal: primal_residual(&cons, &x),
    })
}

fn primal_residual(cons: &[(Vec<f64>, f64)], x: &[f64]) -> f64 {
    cons.iter()
        .map(|(g, h)| (h - dot(g, x)).max(0.0))
        .fold(0.0, f64::max)
}

/// Rounding in the final linear solve can leave a row short by ~1e-16; the
/// slack of a violated row absorbs it.
fn polish_feasibility(problem: &QpProblem, u: &[f64], slack: &mut [f64]) {
    for (r, d) in problem.rows.iter().zip(slack.iter_mut()) {
        let res = dot(&r.b, u) + r.a + *d;
        if res < 0.0 {
            *d -= res;
        }
    }
}

pub fn kkt_residuals(problem: &QpProblem, sol: &QpSolution) -> KktResiduals {
    let n = problem.num_vars();
    let x: Vec<f64> = sol.u.iter().chain(&sol.slack).copied().collect();
    let mut primal: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    let mut grad = vec![0.0; n];
    for (i, xi) in x.iter().enumerate() {
        grad[i] = 2.0 * xi;
    }
    for k in 0..2 * problem.num_rows() {
        let (g, h) = problem.constraint(k);
        let gap = dot(&g, &x) - h;
        primal = primal.max(-gap);
        let l = sol.multipliers[k];
        complementarity = complementarity.max((l * gap).abs());
        for (gr, gi) in grad.iter_mut().zip(&g) {
            *gr -= l * gi;
        }
    }
    let dual = sol
        .multipliers
        .iter()
        .map(|l| (-l).max(0.0))
        .fold(0.0, f64::max);
    let stationarity = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
    KktResiduals {
        primal: primal.max(0.0),
        dual,
        stationarity,
        complementarity,
    }
}
