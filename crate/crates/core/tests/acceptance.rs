//! Acceptance suite. Each test checks one criterion and prints a single
//! PASS/FAIL line. The trained field and the FM vs SafeFM comparison are
//! computed once and shared.

mod common;

use std::sync::OnceLock;

use ndarray::Array2;
use rand::Rng;

use common::{dot, min_norm_by_angle_scan, nearest_feasible_by_grid, relaxed_qp_by_gradient, report, Disk};
use safefm::barrier::{closed_form_u, project_waypoint, regularizer_for, PhiSchedule};
use safefm::commands::{cmd_dataset, cmd_eval, cmd_sample, cmd_train, fit, SampleOptions};
use safefm::config::Config;
use safefm::constraint::{Barrier, Constraint, DiskBarrier, WaypointMask};
use safefm::dataset::{generate_dataset, NUM_CLASSES};
use safefm::eval::{table1_with_samples, MethodSamples, Table1, METHOD_FM, METHOD_SAFE};
use safefm::flow::{batch_sample, integrate, sample_rng, RunConfig, Solver};
use safefm::model::{ModelConfig, VectorField};
use safefm::qp::{kkt_residuals, solve, QpProblem, QpRow};
use safefm::rng::stream_rng;
use safefm::{ClassLabel, Trajectory};

struct Trained {
    cfg: Config,
    field: VectorField,
    /// Share of training trajectories that cross the obstacle, in percent.
    data_violation: f64,
}

fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = Config::default();
        let data = generate_dataset(&cfg.dataset_spec()).expect("dataset");
        let obstacles = cfg.obstacles_for(class(0)).expect("obstacles");
        let crossing = data
            .iter()
            .filter(|s| s.trajectory.waypoints().any(|w| obstacles.iter().any(|o| o.value(w) < 0.0)))
            .count();
        let data_violation = 100.0 * crossing as f64 / data.len() as f64;
        let outcome = fit(&cfg, &data).expect("training");
        Trained {
            cfg,
            field: outcome.field,
            data_violation,
        }
    })
}

struct Comparison {
    table: Table1,
    samples: Vec<MethodSamples>,
}

fn comparison() -> &'static Comparison {
    static CELL: OnceLock<Comparison> = OnceLock::new();
    CELL.get_or_init(|| {
        let t = trained();
        let (table, samples) = table1_with_samples(&t.field, &t.cfg).expect("comparison");
        eprint!("{}", table.to_text());
        Comparison { table, samples }
    })
}

fn class(c: usize) -> ClassLabel {
    ClassLabel::new(c, NUM_CLASSES).unwrap()
}

#[test]
fn criterion_01_hard_safety() {
    let t = trained();
    let cmp = comparison();
    let mut min_h = f64::INFINITY;
    let mut count = 0;
    for s in cmp.samples.iter().filter(|s| s.method == METHOD_SAFE) {
        let obstacles = t.cfg.obstacles_for(s.class).unwrap();
        for traj in &s.trajectories {
            count += 1;
            for w in traj.waypoints() {
                for o in &obstacles {
                    min_h = min_h.min(o.value(w));
                }
            }
        }
    }
    let violations: Vec<f64> = (0..NUM_CLASSES)
        .map(|c| cmp.table.row(METHOD_SAFE, c).unwrap().obstacle_violation)
        .collect();
    let pass = count == 2 * t.cfg.eval.samples_per_class
        && t.cfg.eval.samples_per_class == 1000
        && violations.iter().all(|v| *v == 0.0)
        && min_h >= -1e-9;
    report(
        1,
        "SafeFM obstacle violation is 0.00% and min h >= -1e-9",
        pass,
        &format!("{count} samples, violation {violations:?}%, min h {min_h:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_endpoint_enforcement() {
    let cmp = comparison();
    let rows: Vec<(f64, f64)> = (0..NUM_CLASSES)
        .map(|c| {
            let r = cmp.table.row(METHOD_SAFE, c).unwrap();
            (r.start_accuracy, r.end_accuracy)
        })
        .collect();
    let pass = rows.iter().all(|(s, e)| *s == 100.0 && *e == 100.0);
    report(
        2,
        "SafeFM start and end accuracy are 100.00%",
        pass,
        &format!("(start, end) per class {rows:?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_baseline_gap() {
    let cmp = comparison();
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for c in 0..NUM_CLASSES {
        let fm = cmp.table.row(METHOD_FM, c).unwrap();
        let safe = cmp.table.row(METHOD_SAFE, c).unwrap();
        detail.push(format!(
            "class {c}: FM start {:.2} end {:.2} violation {:.2}",
            fm.start_accuracy, fm.end_accuracy, fm.obstacle_violation
        ));
        if !(fm.obstacle_violation > 0.0) {
            failures.push(format!("class {c} FM violation not positive"));
        }
        if !(2.0..=35.0).contains(&fm.obstacle_violation) {
            failures.push(format!("class {c} FM violation {:.2} outside [2, 35]", fm.obstacle_violation));
        }
        for (name, acc) in [("start", fm.start_accuracy), ("end", fm.end_accuracy)] {
            if !(70.0..=98.0).contains(&acc) {
                failures.push(format!("class {c} FM {name} accuracy {acc:.2} outside [70, 98]"));
            }
        }
        let dominates = safe.start_accuracy > fm.start_accuracy
            && safe.end_accuracy > fm.end_accuracy
            && safe.obstacle_violation < fm.obstacle_violation;
        if !dominates {
            failures.push(format!("class {c} SafeFM does not strictly dominate FM"));
        }
    }
    let pass = failures.is_empty();
    let waypoint: Vec<f64> = (0..NUM_CLASSES)
        .map(|c| cmp.table.row(METHOD_FM, c).unwrap().waypoint_violation)
        .collect();
    detail.push(format!(
        "training data crossing rate {:.2}%, FM waypoint-level violation {waypoint:.2?}%",
        trained().data_violation
    ));
    let mut text = detail.join("; ");
    if !pass {
        text.push_str("; failed: ");
        text.push_str(&failures.join("; "));
    }
    report(3, "FM baseline bands and SafeFM dominance", pass, &text);
    assert!(pass, "{text}");
}

#[test]
fn criterion_04_closed_form_vs_oracle() {
    let mut rng = stream_rng(404, 0);
    let mut worst_obj = 0.0f64;
    let mut worst_res = f64::INFINITY;
    let mut zero_ok = true;
    for _ in 0..10_000 {
        let b = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let a = rng.random_range(-10.0..10.0);
        let u = closed_form_u(&b, a).unwrap();
        let oracle = min_norm_by_angle_scan(b, a);
        worst_obj = worst_obj.max((dot(&u, &u) - oracle).abs());
        worst_res = worst_res.min(dot(&b, &u) + a);
        if a >= 0.0 && u != [0.0, 0.0] {
            zero_ok = false;
        }
    }
    let pass = worst_obj <= 1e-8 && worst_res >= -1e-12 && zero_ok;
    report(
        4,
        "closed-form u matches brute-force QP on 10^4 pairs",
        pass,
        &format!("max objective gap {worst_obj:.2e}, min b.u+a {worst_res:.2e}, u=0 when a>=0: {zero_ok}"),
    );
    assert!(pass);
}

#[test]
fn criterion_05_composite_qp() {
    let mut rng = stream_rng(505, 0);
    let mut worst_kkt = 0.0f64;
    let mut worst_obj = 0.0f64;
    let mut degenerate_rows = 0;
    for k in 0..500 {
        let n = rng.random_range(1..=8);
        let rows: Vec<QpRow> = (0..n)
            .map(|j| {
                let b = if (k + j) % 11 == 0 {
                    degenerate_rows += 1;
                    vec![0.0, 0.0]
                } else {
                    vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]
                };
                QpRow {
                    b,
                    a: rng.random_range(-5.0..3.0),
                }
            })
            .collect();
        let problem = QpProblem::new(2, rows.clone()).unwrap();
        let sol = solve(&problem).unwrap();
        worst_kkt = worst_kkt.max(kkt_residuals(&problem, &sol).max());
        let oracle_rows: Vec<(Vec<f64>, f64)> = rows.iter().map(|r| (r.b.clone(), r.a)).collect();
        let (_, _, obj) = relaxed_qp_by_gradient(&oracle_rows, 2);
        worst_obj = worst_obj.max((sol.objective - obj).abs());
    }
    let pass = worst_kkt <= 1e-9 && worst_obj <= 1e-6 && degenerate_rows > 0;
    report(
        5,
        "active-set QP: KKT and objective vs gradient oracle on 500 instances",
        pass,
        &format!("max KKT residual {worst_kkt:.2e}, max objective gap {worst_obj:.2e}, {degenerate_rows} zero-gradient rows"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_terminal_projection() {
    let mut rng = stream_rng(606, 0);
    let mut worst_single = 0.0f64;
    for _ in 0..1000 {
        let center = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let r = rng.random_range(0.1..1.0);
        let inside = rng.random_bool(0.5);
        let disk = if inside {
            DiskBarrier::containment(center.to_vec(), r).unwrap()
        } else {
            DiskBarrier::keepout(center.to_vec(), r).unwrap()
        };
        let s = loop {
            let p = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            if disk.value(&p) < 0.0 {
                break p;
            }
        };
        let d = ((s[0] - center[0]).powi(2) + (s[1] - center[1]).powi(2)).sqrt();
        let analytic = [center[0] + r * (s[0] - center[0]) / d, center[1] + r * (s[1] - center[1]) / d];
        let p = project_waypoint(&[&disk], &s, 0).unwrap();
        worst_single = worst_single.max((p[0] - analytic[0]).abs().max((p[1] - analytic[1]).abs()));
    }

    let mut worst_pair = 0.0f64;
    let mut checked = 0;
    while checked < 100 {
        let c1 = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let c2 = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let (r1, r2) = (rng.random_range(0.3..1.2), rng.random_range(0.3..1.2));
        // alternate lens-shaped and crescent-shaped feasible sets
        let second_inside = checked % 2 == 0;
        let disks = [
            Disk { center: c1, radius: r1, inside: true },
            Disk { center: c2, radius: r2, inside: second_inside },
        ];
        let barriers = [
            DiskBarrier::containment(c1.to_vec(), r1).unwrap(),
            if second_inside {
                DiskBarrier::containment(c2.to_vec(), r2).unwrap()
            } else {
                DiskBarrier::keepout(c2.to_vec(), r2).unwrap()
            },
        ];
        let s = [rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5)];
        if disks.iter().all(|d| d.ok(s, 0.0)) {
            continue;
        }
        let Some(oracle) = nearest_feasible_by_grid(&disks, s) else {
            continue;
        };
        let p = project_waypoint(&[&barriers[0], &barriers[1]], &s, 0)
            .unwrap_or_else(|e| panic!("{e}: {disks:?} s={s:?} oracle={oracle:?}"));
        worst_pair = worst_pair.max((p[0] - oracle[0]).abs().max((p[1] - oracle[1]).abs()));
        checked += 1;
    }
    let pass = worst_single <= 1e-12 && worst_pair <= 1e-6;
    report(
        6,
        "terminal projection: radial to 1e-12, two-disk vs grid oracle to 1e-6",
        pass,
        &format!("single-disk max error {worst_single:.2e}, two-disk max error {worst_pair:.2e} over {checked} points"),
    );
    assert!(pass);
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[test]
fn criterion_07_gradient_checks() {
    let mut rng = stream_rng(707, 0);
    // network: every parameter of a small net, then sampled parameters of the default architecture
    let mut worst_net = 0.0f64;
    let mut checked = 0;
    for (cfg, dim, sampled) in [
        (
            ModelConfig {
                hidden_layers: 2,
                hidden_width: 12,
                time_features: 5,
                zero_output_layer: false,
            },
            8,
            None,
        ),
        (ModelConfig::default(), 200, Some(60)),
    ] {
        let mut field = VectorField::new(dim, NUM_CLASSES, &cfg, &mut rng).unwrap();
        let rows = 4;
        let ts: Vec<f64> = (0..rows).map(|_| rng.random()).collect();
        let xs = Array2::from_shape_fn((rows, dim), |_| rng.random_range(-2.0..2.0));
        let targets = Array2::from_shape_fn((rows, dim), |_| rng.random_range(-2.0..2.0));
        let classes: Vec<ClassLabel> = (0..rows).map(|r| class(r % NUM_CLASSES)).collect();
        let loss = |f: &VectorField| f.loss_and_gradients(&ts, xs.view(), &classes, targets.view()).unwrap();
        let analytic = loss(&field).1.flatten();
        let params = field.parameters();
        let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let indices: Vec<usize> = match sampled {
            None => (0..params.len()).collect(),
            Some(k) => (0..k).map(|_| rng.random_range(0..params.len())).collect(),
        };
        for k in indices {
            let eps = 1e-5;
            let mut p = params.clone();
            p[k] += eps;
            field.set_parameters(&p).unwrap();
            let up = loss(&field).0;
            p[k] = params[k] - eps;
            field.set_parameters(&p).unwrap();
            let down = loss(&field).0;
            field.set_parameters(&params).unwrap();
            let fd = (up - down) / (2.0 * eps);
            worst_net = worst_net.max(rel_err(analytic[k], fd, 1e-4 * scale));
            checked += 1;
        }
    }

    let mut worst_constraint = 0.0f64;
    let cfg = Config::default();
    let mut constraints = 0;
    for c in 0..NUM_CLASSES {
        for con in cfg.constraints_for(class(c)).unwrap() {
            constraints += 1;
            for _ in 0..200 {
                let s = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                let g = con.grad_h(&s);
                for k in 0..2 {
                    let eps = 1e-6;
                    let mut up = s;
                    up[k] += eps;
                    let mut down = s;
                    down[k] -= eps;
                    let fd = (con.h(&up) - con.h(&down)) / (2.0 * eps);
                    worst_constraint = worst_constraint.max(rel_err(g[k], fd, 1e-6));
                }
            }
        }
    }
    let pass = worst_net <= 1e-4 && worst_constraint <= 1e-5;
    report(
        7,
        "parameter and constraint gradients vs central differences",
        pass,
        &format!(
            "network max rel err {worst_net:.2e} over {checked} params, constraint max rel err {worst_constraint:.2e} over {constraints} constraints"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_zero_interference() {
    let t = trained();
    let run = t.cfg.run_config();
    // a large workspace disk and a far-away obstacle that the learned flow never approaches
    let far = vec![
        Constraint::disk_containment([0.0, 0.0], 10.0, WaypointMask::All, PhiSchedule::default()).unwrap(),
        Constraint::disk_keepout([8.0, -8.0], 0.5, PhiSchedule::default()).unwrap(),
    ];
    let mut identical = true;
    let mut all_zero = true;
    let mut compared = 0;
    for set in [&far[..1], &far[..]] {
        let reg = regularizer_for(set.to_vec()).unwrap().unwrap();
        for c in 0..NUM_CLASSES {
            let cl = class(c);
            let fm = batch_sample(&t.field, cl, None, 100, &run).unwrap();
            let safe = batch_sample(&t.field, cl, Some(reg.as_ref()), 100, &run).unwrap();
            identical &= fm == safe;
            compared += fm.len();
            for k in 0..5 {
                let flow = integrate(&t.field, cl, Some(reg.as_ref()), &run, &mut sample_rng(run.seed, cl, k)).unwrap();
                all_zero &= flow.corrections.iter().all(|c| c.is_zero());
                identical &= flow.output() == &fm[k];
            }
        }
    }
    let pass = identical && all_zero;
    report(
        8,
        "never-threatened constraints leave SafeFM bit-identical to FM",
        pass,
        &format!("{compared} trajectories compared, identical {identical}, every u zero {all_zero}"),
    );
    assert!(pass);
}

fn small_pipeline_config() -> Config {
    Config::from_json(
        r#"{
            "version": 1,
            "seed": 21,
            "dataset": {"samples_per_class": 64, "points_per_trajectory": 25},
            "model": {"hidden_layers": 2, "hidden_width": 48, "time_features": 6},
            "train": {"steps": 60, "batch_size": 32},
            "eval": {"samples_per_class": 40, "timing_samples": 2}
        }"#,
    )
    .unwrap()
}

fn run_pipeline(cfg: &Config, dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let dataset = dir.join("dataset.csv");
    let model = dir.join("model.bin");
    cmd_dataset(cfg, &dataset).unwrap();
    cmd_train(cfg, &dataset, &model).unwrap();
    for (safe, name) in [(false, "fm.csv"), (true, "safe.csv")] {
        let opts = SampleOptions {
            safe,
            n: 10,
            class: None,
            trace: safe,
        };
        cmd_sample(cfg, &model, &opts, &dir.join(name)).unwrap();
    }
    cmd_eval(cfg, &model, &dir.join("table1.csv")).unwrap();
    [
        "dataset.csv",
        "model.bin",
        "model.bin.loss.csv",
        "fm.csv",
        "safe.csv",
        "safe.csv.trace.csv",
        "table1.csv",
    ]
    .iter()
    .map(|n| (n.to_string(), std::fs::read(dir.join(n)).unwrap()))
    .collect()
}

#[test]
fn criterion_09_determinism() {
    let cfg = small_pipeline_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_pipeline(&cfg, a.path());
    let second = run_pipeline(&cfg, b.path());
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let nonempty = first.iter().all(|(_, bytes)| !bytes.is_empty());
    let pass = differing.is_empty() && nonempty;
    report(
        9,
        "two dataset/train/sample/eval runs with one seed give identical files",
        pass,
        &format!("{} files compared (reduced-size config), differing: {differing:?}", first.len()),
    );
    assert!(pass);
}

#[test]
fn criterion_10_timing_report() {
    let cmp = comparison();
    let timing = cmp.table.timing_csv();
    let ratio = cmp.table.overhead_ratio().unwrap_or(f64::NAN);
    let safe_ms: Vec<f64> = (0..NUM_CLASSES)
        .map(|c| cmp.table.row(METHOD_SAFE, c).unwrap().mean_time_ms)
        .collect();
    let steps = trained().cfg.run_config().ode_steps;
    let pass = safe_ms.iter().all(|m| m.is_finite() && *m > 0.0) && ratio <= 3.0 && steps == 100;
    report(
        10,
        "per-trajectory SafeFM time reported, overhead <= 3x at 100 Euler steps",
        pass,
        &format!("SafeFM mean ms per class {safe_ms:.3?}, overhead {ratio:.2}x"),
    );
    eprint!("{timing}");
    assert!(pass);
}

#[test]
fn invariant_step_count_convergence() {
    let t = trained();
    let base = t.cfg.run_config();
    let n = 32;
    for (solver, tol) in [(Solver::Euler, 1e-2), (Solver::Rk4, 1e-4)] {
        let mut total = 0.0;
        for c in 0..NUM_CLASSES {
            let cfg = |steps| RunConfig {
                ode_steps: steps,
                solver,
                ..base.clone()
            };
            let coarse = batch_sample(&t.field, class(c), None, n, &cfg(100)).unwrap();
            let fine = batch_sample(&t.field, class(c), None, n, &cfg(200)).unwrap();
            for (x, y) in coarse.iter().zip(&fine) {
                let diff: f64 = x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
                let norm: f64 = y.as_slice().iter().map(|b| b * b).sum();
                total += (diff / norm).sqrt();
            }
        }
        let mean = total / (n * NUM_CLASSES) as f64;
        eprintln!("{solver:?}: mean relative change 100 -> 200 steps {mean:.3e}");
        assert!(mean <= tol, "{solver:?}: {mean:.3e} > {tol:e}");
    }
}

#[test]
fn invariant_conditioning_and_goal_monotonicity() {
    let t = trained();
    let cmp = comparison();
    for s in cmp.samples.iter().filter(|s| s.method == METHOD_FM) {
        let n = s.trajectories.len() as f64;
        let mean: Vec<f64> = (0..2)
            .map(|k| s.trajectories.iter().map(|tr| tr.select_waypoint(tr.horizon()).unwrap()[k]).sum::<f64>() / n)
            .collect();
        let end = t.cfg.dataset_spec().end_center(s.class);
        assert!(mean[0] * end[0] > 0.0 && mean[1] * end[1] > 0.0, "class {}: mean end {mean:?}", s.class);
    }
    for c in 0..NUM_CLASSES {
        let fm = cmp.table.row(METHOD_FM, c).unwrap();
        let safe = cmp.table.row(METHOD_SAFE, c).unwrap();
        assert!(safe.start_accuracy >= fm.start_accuracy && safe.end_accuracy >= fm.end_accuracy);
    }
}

#[test]
fn safe_outputs_are_unchanged_away_from_the_projection() {
    // the terminal filter only touches waypoints that were unsafe at t = 1-
    let t = trained();
    let run = t.cfg.run_config();
    let cl = class(0);
    let reg = regularizer_for(t.cfg.constraints_for(cl).unwrap()).unwrap().unwrap();
    let constraints = t.cfg.constraints_for(cl).unwrap();
    for k in 0..8 {
        let flow = integrate(&t.field, cl, Some(reg.as_ref()), &run, &mut sample_rng(run.seed, cl, k)).unwrap();
        let pre: &Trajectory = &flow.pre_projection;
        for (i, (a, b)) in pre.waypoints().zip(flow.output().waypoints()).enumerate() {
            let safe_before = constraints
                .iter()
                .filter(|c| c.applies_to(i, pre.horizon()))
                .all(|c| c.h(a) >= 0.0);
            if safe_before {
                assert_eq!(a, b);
            }
        }
    }
}
