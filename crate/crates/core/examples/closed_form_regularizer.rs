//! The closed-form safety correction for one waypoint near a keep-out disk.
//!
//! cargo run --example closed_form_regularizer

use safefm::barrier::{closed_form_u, compute_a_b, regularize_step_single, PhiSchedule};
use safefm::{Constraint, Trajectory};

fn main() -> safefm::Result<()> {
    let obstacle = Constraint::disk_keepout([0.0, 0.0], 0.25, PhiSchedule::new(5.0)?)?;
    let velocity = [-3.0, -0.5];
    // outside the obstacle the gain is constant; inside it grows as t -> 1
    for (point, t) in [([0.4, 0.1], 0.2), ([0.2, 0.05], 0.2), ([0.2, 0.05], 0.8)] {
        let traj = Trajectory::new(point.to_vec(), 2)?;
        let (a, b) = compute_a_b(&obstacle, &traj, 0, &velocity, t)?;
        let u = closed_form_u(&b, a)?;
        println!("s = {point:?}, t = {t}: h = {:.4}, a = {a:.4}, b = {b:.3?}, u = {u:.4?}", obstacle.h(traj.as_slice()));
        let slack = b[0] * u[0] + b[1] * u[1] + a;
        println!("        b . u + a = {slack:.2e}");
    }

    // the stacked version applies the same rule waypoint by waypoint
    let path = Trajectory::new(vec![1.0, 1.0, 0.3, 0.0, 0.1, 0.05], 2)?;
    let v = [0.0, 0.0, -2.0, 0.0, 0.0, 0.0];
    let step = regularize_step_single(&obstacle, &path, &v, 0.5)?;
    println!("stacked u = {:.4?}", step.u);
    Ok(())
}
