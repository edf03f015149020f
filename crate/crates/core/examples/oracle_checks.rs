//! Reference computations: maximum matching, transport fixpoint, regularized optimum.

use bsg::oracle::{self, OracleBudget};

fn main() -> bsg::Result<()> {
    let edges = [(0, 0), (0, 1), (1, 0), (2, 1), (2, 2)];
    println!("maximum matching: {}", oracle::hopcroft_karp(3, 3, &edges)?);

    let cost = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let fp = oracle::sinkhorn_fixpoint(&cost, &[0.5, 0.5], &[0.3, 0.7], 0.1, &OracleBudget::with_tolerance(1e-14))?;
    println!("fixpoint plan {:?} after {} iterations", fp.plan, fp.iterations);
    println!("objective {:.10}", oracle::transport_objective(&cost, &fp.plan, 0.1));
    Ok(())
}
