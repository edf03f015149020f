//! ε-approximate solution of an unregularized-in-y game via the half-regularized solver.

use bsg::bsgame::{self, Mode, SolverConfig};
use bsg::numkit::SparseMatrix;

fn main() -> bsg::Result<()> {
    let a = SparseMatrix::from_dense(&[vec![0.6, 0.0], vec![0.0, 0.7], vec![-0.3, 0.3]])?;
    let (b, c) = (vec![0.1, 0.2], vec![0.3, -0.2, 0.1]);
    for eps in [1e-2, 1e-3] {
        let cfg = SolverConfig::new(Mode::Practical);
        let (z, report, game) = bsgame::solve_half_regularized(a.clone(), b.clone(), c.clone(), 0.4, eps, &cfg)?;
        println!(
            "eps {eps:e}: eps_reg {:.3e}, {} outer iterations, x = {:?}",
            game.eps_reg(),
            report.outer_iterations,
            z.x
        );
    }
    Ok(())
}
