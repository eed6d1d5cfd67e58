//! Samples with and without the safety regularizer from a quickly trained
//! field and counts obstacle crossings.
//!
//! cargo run --release --example safe_sampling

use safefm::barrier::{min_barrier_value, regularizer_for};
use safefm::commands::fit;
use safefm::config::Config;
use safefm::dataset::generate_dataset;
use safefm::flow::{batch_sample, integrate, sample_rng};
use safefm::{Barrier, ClassLabel};

fn main() -> safefm::Result<()> {
    let mut cfg = Config::default();
    cfg.dataset.samples_per_class = 1000;
    cfg.model.hidden_width = 256;
    cfg.train.steps = 400;
    let data = generate_dataset(&cfg.dataset_spec())?;
    let field = fit(&cfg, &data)?.field;
    let run = cfg.run_config();

    let class = ClassLabel::new(0, 2)?;
    let constraints = cfg.constraints_for(class)?;
    let obstacles = cfg.obstacles_for(class)?;
    let regularizer = regularizer_for(constraints.clone())?;
    let crossing = |t: &safefm::Trajectory| t.waypoints().any(|w| obstacles.iter().any(|o| o.value(w) < 0.0));

    let fm = batch_sample(&field, class, None, 200, &run)?;
    let safe = batch_sample(&field, class, regularizer.as_deref(), 200, &run)?;
    println!("FM crossings:     {}/200", fm.iter().filter(|t| crossing(t)).count());
    println!("SafeFM crossings: {}/200", safe.iter().filter(|t| crossing(t)).count());
    let worst = safe.iter().map(|t| min_barrier_value(&constraints, t)).fold(f64::INFINITY, f64::min);
    println!("smallest constraint value over SafeFM samples: {worst:.3e}");

    // a single run keeps its full history
    let flow = integrate(&field, class, regularizer.as_deref(), &run, &mut sample_rng(run.seed, class, 0))?;
    let active = flow.corrections.iter().filter(|c| !c.is_zero()).count();
    let moved: f64 = flow.projection_delta.iter().map(|d| d * d).sum::<f64>().sqrt();
    println!("run 0: correction active on {active}/{} steps, terminal projection moved {moved:.3e}", run.ode_steps);
    Ok(())
}
