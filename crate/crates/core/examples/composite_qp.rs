//! The slack-relaxed QP combining several barrier rows at one waypoint.
//!
//! cargo run --example composite_qp

use safefm::qp::{kkt_residuals, solve, QpProblem, QpRow};

fn main() -> safefm::Result<()> {
    let rows = vec![
        QpRow { b: vec![1.0, 0.0], a: -2.0 },
        QpRow { b: vec![-1.0, 0.0], a: -2.0 },
        QpRow { b: vec![0.0, 1.0], a: 0.5 },
        QpRow { b: vec![0.0, 0.0], a: -1.0 },
    ];
    let problem = QpProblem::new(2, rows)?;
    let sol = solve(&problem)?;
    println!("u = {:?}", sol.u);
    println!("slacks = {:?}", sol.slack);
    println!("objective = {} after {} working-set changes", sol.objective, sol.iterations);
    println!("active constraints = {:?}", sol.active);
    println!("KKT residual = {:.2e}", kkt_residuals(&problem, &sol).max());
    Ok(())
}
