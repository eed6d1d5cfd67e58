//! Reference computations shared by the integration tests. Each one solves
//! its problem by brute force, independently of the library code.

#![allow(dead_code)]

use std::f64::consts::TAU;
use std::io::Write;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Prints one line straight to the terminal, bypassing the test harness's
/// output capture.
pub fn report(id: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[acceptance] criterion {id:>2} {verdict}: {title} ({detail})");
}

/// Minimum of `|u|^2` subject to `b . u + a >= 0` in the plane, by scanning
/// the direction of `u` and refining with golden-section search.
pub fn min_norm_by_angle_scan(b: [f64; 2], a: f64) -> f64 {
    if a >= 0.0 {
        return 0.0;
    }
    let cost = |th: f64| {
        let proj = b[0] * th.cos() + b[1] * th.sin();
        if proj <= 0.0 {
            f64::INFINITY
        } else {
            (a / proj).powi(2)
        }
    };
    let n = 720;
    let step = TAU / n as f64;
    let best = (0..n)
        .map(|k| k as f64 * step)
        .min_by(|x, y| cost(*x).total_cmp(&cost(*y)))
        .unwrap();
    let (mut lo, mut hi) = (best - step, best + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..120 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if cost(m1) < cost(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    cost(0.5 * (lo + hi))
}

/// Relaxed QP `min |u|^2 + |delta|^2` s.t. `b_j . u + a_j + delta_j >= 0`,
/// `delta >= 0`. The slacks are projected onto their bound in closed form,
/// `delta_j = max(0, -a_j - b_j . u)`, and the remaining smooth problem in
/// `u` is solved by accelerated gradient descent with restarts.
pub fn relaxed_qp_by_gradient(rows: &[(Vec<f64>, f64)], dim: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let lip = 2.0 * (1.0 + rows.iter().map(|(b, _)| dot(b, b)).sum::<f64>());
    let slack = |u: &[f64]| -> Vec<f64> { rows.iter().map(|(b, a)| (-a - dot(b, u)).max(0.0)).collect() };
    let value = |u: &[f64]| dot(u, u) + slack(u).iter().map(|d| d * d).sum::<f64>();
    let grad = |u: &[f64]| -> Vec<f64> {
        let mut g: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        for ((b, _), d) in rows.iter().zip(slack(u)) {
            for (gi, bi) in g.iter_mut().zip(b) {
                *gi -= 2.0 * d * bi;
            }
        }
        g
    };
    let mut x = vec![0.0; dim];
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    for _ in 0..200_000 {
        let g = grad(&y);
        if dot(&g, &g).sqrt() < 1e-14 {
            x = y.clone();
            break;
        }
        let next: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - gi / lip).collect();
        let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        if value(&next) > value(&x) {
            // restart the momentum when it overshoots
            momentum = 1.0;
            y = x.clone();
            continue;
        }
        let beta = (momentum - 1.0) / m_next;
        y = next.iter().zip(&x).map(|(n, o)| n + beta * (n - o)).collect();
        x = next;
        momentum = m_next;
    }
    let d = slack(&x);
    let obj = value(&x);
    (x, d, obj)
}

/// A disk with `inside = true` for containment and `false` for keep-out.
#[derive(Debug, Clone, Copy)]
pub struct Disk {
    pub center: [f64; 2],
    pub radius: f64,
    pub inside: bool,
}

impl Disk {
    pub fn ok(&self, p: [f64; 2], tol: f64) -> bool {
        let d2 = (p[0] - self.center[0]).powi(2) + (p[1] - self.center[1]).powi(2);
        let r2 = self.radius * self.radius;
        if self.inside {
            r2 - d2 >= -tol
        } else {
            d2 - r2 >= -tol
        }
    }

    fn at(&self, th: f64) -> [f64; 2] {
        [
            self.center[0] + self.radius * th.cos(),
            self.center[1] + self.radius * th.sin(),
        ]
    }
}

fn dist2(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
}

/// Nearest point to `s` satisfying every disk, for `s` outside the feasible
/// set. The answer lies on one of the circles, so each circle is searched on
/// a grid of angles, keeping points the other disks accept, and the grid is
/// repeatedly refined around the best angle. `None` when nothing is feasible.
pub fn nearest_feasible_by_grid(disks: &[Disk], s: [f64; 2]) -> Option<[f64; 2]> {
    let mut best: Option<([f64; 2], f64)> = None;
    for (k, disk) in disks.iter().enumerate() {
        let feasible = |p: [f64; 2]| disks.iter().enumerate().all(|(j, d)| j == k || d.ok(p, 1e-13));
        let n = 20_000;
        let mut lo = 0.0;
        let mut width = TAU;
        let mut found: Option<f64> = None;
        for _ in 0..40 {
            let step = width / n as f64;
            let mut local: Option<(f64, f64)> = None;
            for i in 0..=n {
                let th = lo + i as f64 * step;
                let p = disk.at(th);
                if feasible(p) {
                    let d = dist2(p, s);
                    if local.is_none_or(|(_, bd)| d < bd) {
                        local = Some((th, d));
                    }
                }
            }
            let Some((th, _)) = local else { break };
            found = Some(th);
            lo = th - 2.0 * step;
            width = 4.0 * step;
            if step < 1e-15 {
                break;
            }
        }
        if let Some(th) = found {
            let p = disk.at(th);
            let d = dist2(p, s);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((p, d));
            }
        }
    }
    best.map(|(p, _)| p)
}
