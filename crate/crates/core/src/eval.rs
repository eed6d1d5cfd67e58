//! Start/end accuracy and obstacle-violation metrics, and the side-by-side
//! comparison of unconstrained and safety-regularized sampling.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::barrier::regularizer_for;
use crate::config::Config;
use crate::constraint::{Barrier, DiskBarrier};
use crate::dataset::{DatasetSpec, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::flow::{batch_sample, integrate, sample_rng, Regularizer, RunConfig, VelocityField};
use crate::trajectory::{ClassLabel, Trajectory};

/// Start and end regions of one class.
#[derive(Debug, Clone)]
pub struct GoalRegions {
    pub start: DiskBarrier,
    pub end: DiskBarrier,
}

impl GoalRegions {
    pub fn for_class(spec: &DatasetSpec, class: ClassLabel) -> Result<Self> {
        Ok(Self {
            start: DiskBarrier::containment(spec.start_center(class).to_vec(), spec.goal_radius)?,
            end: DiskBarrier::containment(spec.end_center(class).to_vec(), spec.goal_radius)?,
        })
    }
}

/// One row of the comparison table. Percentages are in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub method: String,
    pub class: usize,
    pub samples: usize,
    pub start_accuracy: f64,
    pub end_accuracy: f64,
    /// Share of trajectories with at least one waypoint inside an obstacle.
    pub obstacle_violation: f64,
    /// Share of all waypoints inside an obstacle.
    pub waypoint_violation: f64,
    pub mean_time_ms: f64,
    pub median_time_ms: f64,
}

fn percent(count: usize, total: usize) -> f64 {
    100.0 * count as f64 / total as f64
}

fn median(sorted: &[f64]) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => sorted[n / 2],
        n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}

/// Scores `trajs` against the class goal regions and the obstacles. A point
/// is inside a goal when the containment value is `>= 0` and inside an
/// obstacle when the keep-out value is `< 0`.
pub fn evaluate(
    method: &str,
    trajs: &[Trajectory],
    class: ClassLabel,
    goals: &GoalRegions,
    obstacles: &[&dyn Barrier],
    timings: &[Duration],
) -> Result<EvalReport> {
    if trajs.is_empty() {
        return Err(Error::Parameter("evaluate needs at least one trajectory".into()));
    }
    let ds = goals.start.state_dim();
    let mut starts = 0;
    let mut ends = 0;
    let mut violating = 0;
    let mut bad_waypoints = 0;
    let mut waypoints = 0;
    for t in trajs {
        if t.state_dim() != ds || obstacles.iter().any(|o| o.state_dim() != ds) {
            return Err(Error::Parameter(format!(
                "trajectory state dimension {} does not match region dimension {ds}",
                t.state_dim()
            )));
        }
        if goals.start.value(t.select_waypoint(0)?) >= 0.0 {
            starts += 1;
        }
        if goals.end.value(t.select_waypoint(t.horizon())?) >= 0.0 {
            ends += 1;
        }
        let inside = t
            .waypoints()
            .filter(|s| obstacles.iter().any(|o| o.value(s) < 0.0))
            .count();
        if inside > 0 {
            violating += 1;
        }
        bad_waypoints += inside;
        waypoints += t.num_waypoints();
    }
    let mut ms: Vec<f64> = timings.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    ms.sort_by(f64::total_cmp);
    let mean_time_ms = if ms.is_empty() {
        f64::NAN
    } else {
        ms.iter().sum::<f64>() / ms.len() as f64
    };
    let n = trajs.len();
    Ok(EvalReport {
        method: method.to_string(),
        class: class.id(),
        samples: n,
        start_accuracy: percent(starts, n),
        end_accuracy: percent(ends, n),
        obstacle_violation: percent(violating, n),
        waypoint_violation: percent(bad_waypoints, waypoints),
        mean_time_ms,
        median_time_ms: median(&ms),
    })
}

pub const METHOD_FM: &str = "FM";
pub const METHOD_SAFE: &str = "SafeFM";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1 {
    pub rows: Vec<EvalReport>,
}

impl Table1 {
    pub fn row(&self, method: &str, class: usize) -> Option<&EvalReport> {
        self.rows.iter().find(|r| r.method == method && r.class == class)
    }

    /// Metric columns only; identical inputs give identical bytes.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "method,class,samples,start_accuracy,end_accuracy,obstacle_violation,waypoint_violation\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.2},{:.2},{:.2},{:.4}",
                r.method, r.class, r.samples, r.start_accuracy, r.end_accuracy, r.obstacle_violation, r.waypoint_violation
            );
        }
        s
    }

    /// Wall-clock timing columns (not reproducible across runs).
    pub fn timing_csv(&self) -> String {
        let mut s = String::from("method,class,mean_time_ms,median_time_ms\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.4},{:.4}", r.method, r.class, r.mean_time_ms, r.median_time_ms);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<8} {:>5} {:>10} {:>10} {:>12} {:>11} {:>11}",
            "Method", "Class", "Start (%)", "End (%)", "Obstacle (%)", "Mean (ms)", "Median (ms)"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8} {:>5} {:>10.2} {:>10.2} {:>12.2} {:>11.3} {:>11.3}",
                r.method, r.class, r.start_accuracy, r.end_accuracy, r.obstacle_violation, r.mean_time_ms, r.median_time_ms
            );
        }
        if let Some(ratio) = self.overhead_ratio() {
            let _ = writeln!(s, "safety overhead (mean time ratio): {ratio:.2}x");
        }
        s
    }

    /// Mean safe-sampling time over mean unconstrained time, across classes.
    pub fn overhead_ratio(&self) -> Option<f64> {
        let mean = |m: &str| {
            let xs: Vec<f64> = self
                .rows
                .iter()
                .filter(|r| r.method == m && r.mean_time_ms.is_finite())
                .map(|r| r.mean_time_ms)
                .collect();
            (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
        };
        Some(mean(METHOD_SAFE)? / mean(METHOD_FM)?)
    }
}

/// Times `count` single-trajectory runs (batch size 1) on the sampling streams.
pub fn time_single_runs<F: VelocityField + ?Sized>(
    field: &F,
    class: ClassLabel,
    regularizer: Option<&dyn Regularizer>,
    run: &RunConfig,
    count: usize,
) -> Result<Vec<Duration>> {
    (0..count)
        .map(|k| {
            let mut rng = sample_rng(run.seed, class, k);
            let start = Instant::now();
            integrate(field, class, regularizer, run, &mut rng)?;
            Ok(start.elapsed())
        })
        .collect()
}

/// Trajectories drawn for one row of the comparison.
#[derive(Debug, Clone)]
pub struct MethodSamples {
    pub method: &'static str,
    pub class: ClassLabel,
    pub trajectories: Vec<Trajectory>,
}

/// Samples every class with and without the safety regularizer on shared
/// random streams and scores both.
pub fn table1_harness<F: VelocityField + ?Sized>(field: &F, cfg: &Config) -> Result<Table1> {
    Ok(table1_with_samples(field, cfg)?.0)
}

/// [`table1_harness`] that also returns the scored trajectories, row by row.
pub fn table1_with_samples<F: VelocityField + ?Sized>(
    field: &F,
    cfg: &Config,
) -> Result<(Table1, Vec<MethodSamples>)> {
    let run = cfg.run_config();
    let n = cfg.eval.samples_per_class;
    let mut fm_rows = Vec::new();
    let mut safe_rows = Vec::new();
    let mut fm_samples = Vec::new();
    let mut safe_samples = Vec::new();
    for c in 0..NUM_CLASSES {
        let class = ClassLabel::new(c, NUM_CLASSES)?;
        let goals = GoalRegions::for_class(&cfg.dataset_spec(), class)?;
        let constraints = cfg.constraints_for(class)?;
        let obstacles = cfg.obstacles_for(class)?;
        let obstacle_refs: Vec<&dyn Barrier> = obstacles.iter().map(|o| o as &dyn Barrier).collect();
        let regularizer = regularizer_for(constraints)?;

        let fm = batch_sample(field, class, None, n, &run)?;
        let fm_times = time_single_runs(field, class, None, &run, cfg.eval.timing_samples)?;
        fm_rows.push(evaluate(METHOD_FM, &fm, class, &goals, &obstacle_refs, &fm_times)?);
        fm_samples.push(MethodSamples {
            method: METHOD_FM,
            class,
            trajectories: fm,
        });

        let reg = regularizer.as_deref();
        let safe = batch_sample(field, class, reg, n, &run)?;
        let safe_times = time_single_runs(field, class, reg, &run, cfg.eval.timing_samples)?;
        safe_rows.push(evaluate(METHOD_SAFE, &safe, class, &goals, &obstacle_refs, &safe_times)?);
        safe_samples.push(MethodSamples {
            method: METHOD_SAFE,
            class,
            trajectories: safe,
        });
    }
    fm_rows.extend(safe_rows);
    fm_samples.extend(safe_samples);
    Ok((Table1 { rows: fm_rows }, fm_samples))
}
