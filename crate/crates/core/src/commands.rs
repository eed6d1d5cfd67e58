//! The dataset, train, sample, eval and plot commands behind the `safefm`
//! binary, usable directly from library code.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::barrier::regularizer_for;
use crate::config::Config;
use crate::dataset::{generate_dataset, read_dataset, write_dataset, LabeledTrajectory, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::eval::{table1_harness, Table1};
use crate::flow::{batch_sample, integrate, sample_rng, FlowRun};
use crate::model::{load_model, save_model, train, TrainOutcome, VectorField};
use crate::plot::write_svg;
use crate::rng::stream_rng;
use crate::trajectory::ClassLabel;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// `<path>` with `suffix` appended to the file name.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

pub fn cmd_dataset(cfg: &Config, out: &Path) -> Result<Vec<LabeledTrajectory>> {
    let data = generate_dataset(&cfg.dataset_spec())?;
    write_dataset(out, &data)?;
    Ok(data)
}

/// Initializes a field from the training seed and fits it to `data`.
pub fn fit(cfg: &Config, data: &[LabeledTrajectory]) -> Result<TrainOutcome> {
    let tc = cfg.train_config();
    let mut init_rng = stream_rng(tc.seed, 1);
    let field = VectorField::new(cfg.dataset_spec().trajectory_dim(), NUM_CLASSES, &cfg.model, &mut init_rng)?;
    train(field, data, &tc)
}

/// Loss curve as `step,loss` rows under a header.
pub fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("step,loss\n");
    for (k, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{k},{l}");
    }
    s
}

/// Trains on the dataset at `dataset`, writes the checkpoint to `model_out`
/// and the loss curve to `<model_out>.loss.csv`.
pub fn cmd_train(cfg: &Config, dataset: &Path, model_out: &Path) -> Result<TrainOutcome> {
    let data = read_dataset(dataset)?;
    let expected = cfg.dataset_spec().trajectory_dim();
    if let Some(bad) = data.iter().find(|s| s.trajectory.dim() != expected) {
        return Err(Error::Dimension(format!(
            "dataset trajectories have dimension {}, config expects {expected}",
            bad.trajectory.dim()
        )));
    }
    let outcome = fit(cfg, &data)?;
    save_model(&outcome.field, model_out)?;
    write_file(&sibling_path(model_out, ".loss.csv"), &loss_csv(&outcome.losses))?;
    Ok(outcome)
}

fn load_checked(cfg: &Config, model: &Path) -> Result<VectorField> {
    let field = load_model(model)?;
    field.expect_dims(cfg.run_config().trajectory_dim(), NUM_CLASSES)?;
    Ok(field)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOptions {
    pub safe: bool,
    /// Trajectories per class.
    pub n: usize,
    /// Restrict to one class; all classes when `None`.
    pub class: Option<usize>,
    /// Also write `<out>.trace.csv`.
    pub trace: bool,
}

/// Samples `n` trajectories per selected class (class-major order).
pub fn sample_trajectories(
    cfg: &Config,
    field: &VectorField,
    opts: &SampleOptions,
) -> Result<(Vec<LabeledTrajectory>, Vec<(ClassLabel, usize, FlowRun)>)> {
    let run = cfg.run_config();
    let classes: Vec<usize> = match opts.class {
        Some(c) => vec![c],
        None => (0..NUM_CLASSES).collect(),
    };
    let mut out = Vec::new();
    let mut traces = Vec::new();
    for c in classes {
        let class = ClassLabel::new(c, NUM_CLASSES)?;
        let regularizer = if opts.safe {
            regularizer_for(cfg.constraints_for(class)?)?
        } else {
            None
        };
        let reg = regularizer.as_deref();
        if opts.trace {
            for k in 0..opts.n {
                let mut rng = sample_rng(run.seed, class, k);
                let flow = integrate(field, class, reg, &run, &mut rng).map_err(|e| Error::Sample {
                    index: k,
                    source: Box::new(e),
                })?;
                out.push(LabeledTrajectory {
                    trajectory: flow.output().clone(),
                    class,
                });
                traces.push((class, k, flow));
            }
        } else {
            for trajectory in batch_sample(field, class, reg, opts.n, &run)? {
                out.push(LabeledTrajectory { trajectory, class });
            }
        }
    }
    Ok((out, traces))
}

/// Writes one run's trace. Per ODE step `k` there is a `state` row with the
/// state at `t_k` and a `u` row with the correction applied during the step;
/// the last grid point has a `pre` row (before the terminal filter) and a
/// final `state` row. Columns: `class,run,step,t,kind,x0,y0,...`.
pub fn write_trace<W: Write>(w: &mut W, class: ClassLabel, run: usize, flow: &FlowRun) -> std::io::Result<()> {
    let mut row = |step: usize, kind: &str, values: &[f64]| -> std::io::Result<()> {
        write!(w, "{},{run},{step},{},{kind}", class.id(), flow.times[step])?;
        for v in values {
            write!(w, ",{v}")?;
        }
        writeln!(w)
    };
    let last = flow.times.len() - 1;
    for k in 0..last {
        row(k, "state", flow.snapshots[k].as_slice())?;
        row(k, "u", &flow.corrections[k].u)?;
    }
    row(last, "pre", flow.pre_projection.as_slice())?;
    row(last, "state", flow.output().as_slice())
}

pub fn cmd_sample(cfg: &Config, model: &Path, opts: &SampleOptions, out: &Path) -> Result<Vec<LabeledTrajectory>> {
    if opts.n == 0 {
        return Err(Error::Parameter("--n must be at least 1".into()));
    }
    let field = load_checked(cfg, model)?;
    let (data, traces) = sample_trajectories(cfg, &field, opts)?;
    write_dataset(out, &data)?;
    if opts.trace {
        let path = sibling_path(out, ".trace.csv");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "class,run,step,t,kind,values...").map_err(|e| Error::io(&path, e))?;
        for (class, k, flow) in &traces {
            write_trace(&mut w, *class, *k, flow).map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(data)
}

/// Runs the comparison, writes metrics to `out` and timings to
/// `<out>.timing.csv`.
pub fn cmd_eval(cfg: &Config, model: &Path, out: &Path) -> Result<Table1> {
    let field = load_checked(cfg, model)?;
    let table = table1_harness(&field, cfg)?;
    write_file(out, &table.to_csv())?;
    write_file(&sibling_path(out, ".timing.csv"), &table.timing_csv())?;
    Ok(table)
}

pub fn cmd_plot(cfg: &Config, trajectories: &Path, out: &Path) -> Result<usize> {
    let data = read_dataset(trajectories)?;
    write_svg(out, &data, &cfg.constraints)?;
    Ok(data.len())
}
