//! Solve a small regularized box-simplex game and compare against the oracle.

use bsg::bsgame::{self, Mode, RegGame};
use bsg::numkit::SparseMatrix;
use bsg::oracle::{self, OracleBudget};

fn main() -> bsg::Result<()> {
    let a = SparseMatrix::from_dense(&[vec![0.5, -0.3], vec![-0.4, 0.2], vec![0.1, 0.6]])?;
    let game = RegGame::new(a, vec![0.05, -0.1], vec![0.2, -0.1, 0.0], 0.5, 0.005)?;
    let (z, report) = bsgame::solve(&game, 1e-8, Mode::Theory)?;
    println!("x = {:?}", z.x);
    println!("y = {:?}", z.y);
    println!("certified {} after {} outer iterations, gap {:.3e}", report.certified, report.outer_iterations, report.final_gap);

    let opt = oracle::brute_reg_optimum(&game, &OracleBudget::with_tolerance(1e-13))?;
    let l1: f64 = z.x.iter().zip(&opt.x).map(|(a, b)| (a - b).abs()).sum();
    println!("oracle value {:.12}, l1 distance {l1:.2e}", opt.value);
    Ok(())
}
