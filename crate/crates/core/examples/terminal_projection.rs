//! Projecting unsafe waypoints onto the safe set at the end of sampling.
//!
//! cargo run --example terminal_projection

use safefm::barrier::{project_waypoint, terminal_filter, PhiSchedule};
use safefm::{Barrier, Constraint, DiskBarrier, Trajectory, WaypointMask};

fn main() -> safefm::Result<()> {
    let obstacle = Constraint::disk_keepout([0.0, 0.0], 0.25, PhiSchedule::default())?;
    let goal = Constraint::disk_containment([1.0, 1.0], 0.2, WaypointMask::Last, PhiSchedule::default())?;
    let traj = Trajectory::new(vec![-1.0, -1.0, 0.1, 0.0, 0.0, 0.0, 1.5, 1.2], 2)?;
    let safe = terminal_filter(&[obstacle, goal], &traj)?;
    for (i, (before, after)) in traj.waypoints().zip(safe.waypoints()).enumerate() {
        println!("waypoint {i}: {before:?} -> {after:?}");
    }

    // a waypoint that must sit in the overlap of two disks lands on a corner
    let a = DiskBarrier::containment(vec![-0.5, 0.0], 1.0)?;
    let b = DiskBarrier::containment(vec![0.5, 0.0], 1.0)?;
    let p = project_waypoint(&[&a, &b], &[0.0, 3.0], 0)?;
    println!("lens corner: {p:?}, h = ({:.1e}, {:.1e})", a.value(&p), b.value(&p));
    Ok(())
}
