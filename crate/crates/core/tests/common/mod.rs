#![allow(dead_code)]

use bsg::bsgame::{PdPoint, RegGame};
use bsg::ddbm::BipartiteGraph;
use bsg::numkit::SparseMatrix;
use bsg::sinkhorn::OTInstance;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Sparse game with `‖A‖_∞ = 1` and at least one entry per column.
pub fn random_game(rng: &mut ChaCha8Rng, m: usize, n: usize, mu: f64, eps: f64) -> RegGame {
    let a = random_matrix(rng, m, n, 0.5);
    let b = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let c = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    RegGame::new(a, b, c, mu, eps).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize, density: f64) -> SparseMatrix {
    let mut t = Vec::new();
    for j in 0..n {
        let anchor = rng.gen_range(0..m);
        for i in 0..m {
            if i == anchor {
                let v = rng.gen_range(0.2..1.0);
                t.push((i, j, if rng.gen_bool(0.5) { v } else { -v }));
            } else if rng.gen_bool(density) {
                t.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
    }
    let a = SparseMatrix::from_triplets(m, n, &t).unwrap();
    let s = a.norm_inf();
    a.scaled(1.0 / s)
}

/// Game whose box constraints bind near the uniform point: `b = Aᵀu + U(−0.3, 0.3)·|A|ᵀu`.
pub fn binding_game(rng: &mut ChaCha8Rng, m: usize, n: usize, mu: f64, eps: f64) -> RegGame {
    let a = random_matrix(rng, m, n, 0.3);
    let u = vec![1.0 / m as f64; m];
    let mean = a.spmv(&u, true, false).unwrap();
    let abs_mean = a.spmv(&u, true, true).unwrap();
    let b = (0..n).map(|j| mean[j] + rng.gen_range(-0.3..0.3) * abs_mean[j]).collect();
    let c = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    RegGame::new(a, b, c, mu, eps).unwrap()
}

pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize, lo: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(lo..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

pub fn random_point(rng: &mut ChaCha8Rng, m: usize, n: usize) -> PdPoint {
    PdPoint::new(random_simplex(rng, m, 0.01), (0..n).map(|_| rng.gen_range(0.0..1.0)).collect())
}

pub fn random_graph(rng: &mut ChaCha8Rng, nl: usize, nr: usize, p: f64) -> BipartiteGraph {
    let edges = (0..nl).flat_map(|u| (0..nr).map(move |v| (u, v))).filter(|_| rng.gen_bool(p)).collect();
    BipartiteGraph::new(nl, nr, edges).unwrap()
}

pub fn random_ot(rng: &mut ChaCha8Rng, l: usize, r: usize, mu: f64) -> OTInstance {
    let cost = (0..l).map(|_| (0..r).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
    OTInstance::new(cost, random_simplex(rng, l, 0.05), random_simplex(rng, r, 0.05), mu).unwrap()
}

/// Generalized KL `Σ a log(a/b) − a + b`.
pub fn gen_kl(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| if p > 0.0 { p * (p / q).ln() - p + q } else { q })
        .sum()
}
