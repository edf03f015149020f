//! Entropic transport by plain Sinkhorn scaling and by the accelerated reduction.

use bsg::bsgame::{Mode, SolverConfig};
use bsg::sinkhorn::{self, OTInstance};

fn main() -> bsg::Result<()> {
    let cost = vec![vec![0.0, 0.6, 1.0], vec![0.5, 0.1, 0.7], vec![0.9, 0.4, 0.2]];
    let inst = OTInstance::new(cost, vec![0.5, 0.3, 0.2], vec![0.2, 0.3, 0.5], 0.2)?;
    let eps = 1e-3;

    let (plain, rep) = sinkhorn::solve_unaccel(&inst, eps, None, 1_000_000)?;
    println!("sinkhorn: objective {:.6} in {} iterations", sinkhorn::sinkhorn_objective(&inst, &plain)?, rep.iterations);

    let (accel, rep) = sinkhorn::solve_via_bsgame(&inst, eps, &SolverConfig::new(Mode::Practical))?;
    println!(
        "accelerated: objective {:.6} in {} outer iterations (C = {:.3})",
        sinkhorn::sinkhorn_objective(&inst, &accel)?,
        rep.solve.outer_iterations,
        rep.big_c
    );
    for row in &accel.x {
        println!("  {row:.4?}");
    }
    Ok(())
}
