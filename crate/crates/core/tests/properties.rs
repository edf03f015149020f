mod common;

use bsg::bsgame::{self, Mode};
use bsg::ddbm::{self, BipartiteGraph};
use bsg::numkit::{self, SparseMatrix};
use bsg::sinkhorn::{self, LogKernel};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn log_sum_exp_bounds_and_shift(v in prop::collection::vec(-700.0f64..700.0, 1..20), shift in -50.0f64..50.0) {
        let lse = numkit::log_sum_exp(&v);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lse >= max - 1e-12 && lse <= max + (v.len() as f64).ln() + 1e-12);
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        prop_assert!((numkit::log_sum_exp(&shifted) - lse - shift).abs() <= 1e-9 * (1.0 + lse.abs()));
    }

    #[test]
    fn softmax_is_a_distribution(v in prop::collection::vec(-500.0f64..500.0, 1..20)) {
        let mut p = v.clone();
        numkit::softmax_in_place(&mut p);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spmv_matches_dense(seed: u64, m in 1usize..8, n in 1usize..8) {
        let mut r = rng(seed);
        let a = random_matrix(&mut r, m, n, 0.5);
        let d = a.to_dense();
        let v: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..m).map(|_| r.gen_range(-1.0..1.0)).collect();
        let av = a.spmv(&v, false, false).unwrap();
        let atu = a.spmv(&u, true, true).unwrap();
        for i in 0..m {
            let want: f64 = (0..n).map(|j| d[i][j] * v[j]).sum();
            prop_assert!((av[i] - want).abs() < 1e-12);
        }
        for j in 0..n {
            let want: f64 = (0..m).map(|i| d[i][j].abs() * u[i]).sum();
            prop_assert!((atu[j] - want).abs() < 1e-12);
        }
        prop_assert_eq!(SparseMatrix::from_dense(&d).unwrap().triplets(), a.triplets());
    }

    #[test]
    fn pad_simplex_stays_close(seed: u64, m in 1usize..12, delta in 1e-9f64..0.05) {
        let mut r = rng(seed);
        let x = random_simplex(&mut r, m, 0.0);
        let p = bsgame::pad_simplex(&x, delta);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v >= delta / (1.0 + m as f64 * delta) - 1e-15));
        prop_assert!(numkit::l1_dist(&p, &x) <= 2.0 * m as f64 * delta + 1e-12);
    }

    #[test]
    fn hessian_sandwich_holds(seed: u64, m in 1usize..8, n in 1usize..5, ratio in 4.5f64..400.0) {
        let mut r = rng(seed);
        let mu = r.gen_range(0.05..1.0);
        let g = random_game(&mut r, m, n, mu, mu / ratio);
        let z = random_point(&mut r, m, n);
        let wx: Vec<f64> = (0..m).map(|_| r.gen_range(-1.0..1.0)).collect();
        let wy: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let h = bsgame::hessian_form(&g, &z, &wx, &wy).unwrap();
        let d = bsgame::diag_form(&g, &z.x, &wx, &wy).unwrap();
        prop_assert!(d <= h * (1.0 + 1e-9) && h <= 4.0 * d * (1.0 + 1e-9), "D {} H {}", d, h);
    }

    #[test]
    fn bregman_divergence_nonnegative(seed: u64, m in 1usize..8, n in 1usize..5) {
        let mut r = rng(seed);
        let g = random_game(&mut r, m, n, 0.5, 0.005);
        let (z, w) = (random_point(&mut r, m, n), random_point(&mut r, m, n));
        prop_assert!(bsgame::breg_div(&g, &z, &w).unwrap() >= -1e-12);
        prop_assert!(bsgame::breg_div(&g, &z, &z).unwrap().abs() < 1e-12);
    }

    #[test]
    fn certified_gap_nonnegative(seed: u64, m in 1usize..8, n in 1usize..5) {
        let mut r = rng(seed);
        let g = random_game(&mut r, m, n, 0.4, 0.004);
        let z = random_point(&mut r, m, n);
        prop_assert!(bsgame::certified_gap(&g, &z) >= -1e-12);
        prop_assert!(bsgame::primal_value(&g, &z.x) >= bsgame::dual_value(&g, &z.y) - 1e-12);
    }

    #[test]
    fn remove_overflow_guarantees(seed: u64, nl in 1usize..7, nr in 1usize..7) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, nl, nr, 0.6);
        let ell: Vec<f64> = (0..g.m()).map(|_| r.gen_range(0.0..2.0)).collect();
        let out = ddbm::remove_overflow(&g, &ell).unwrap();
        let overflow: f64 = g.loads(&ell).iter().map(|s| (s - 1.0).max(0.0)).sum();
        prop_assert!(out.iter().zip(&ell).all(|(a, b)| *a >= 0.0 && a <= b));
        prop_assert!(g.loads(&out).iter().all(|&s| s <= 1.0 + 1e-12));
        prop_assert!(ell.iter().sum::<f64>() - out.iter().sum::<f64>() <= overflow + 1e-12);
    }

    #[test]
    fn greedy_is_maximal_half_approximation(seed: u64, nl in 1usize..9, nr in 1usize..9) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, nl, nr, 0.4);
        let (size, chosen) = ddbm::greedy_matching(&g);
        prop_assert_eq!(size, chosen.len());
        let mut ind = vec![0.0; g.m()];
        chosen.iter().for_each(|&e| ind[e] = 1.0);
        let loads = g.loads(&ind);
        prop_assert!(loads.iter().all(|&s| s <= 1.0));
        for e in 0..g.m() {
            let (u, v) = g.edge(e);
            prop_assert!(loads[u] == 1.0 || loads[nl + v] == 1.0, "edge {} could extend the matching", e);
        }
        prop_assert!(2 * size >= g.mcm());
        prop_assert!(size <= g.mcm());
    }

    #[test]
    fn ot_round_is_exact(seed: u64, l in 1usize..8, rr in 1usize..8) {
        let mut r = rng(seed);
        let x: Vec<Vec<f64>> = (0..l).map(|_| (0..rr).map(|_| r.gen_range(0.0..0.5)).collect()).collect();
        let (dl, dr) = (random_simplex(&mut r, l, 0.0), random_simplex(&mut r, rr, 0.0));
        let y = sinkhorn::ot_round(&x, &dl, &dr).unwrap();
        prop_assert!(y.iter().flatten().all(|&v| v >= 0.0));
        prop_assert!(sinkhorn::marginal_violation(&y, &dl, &dr) <= 1e-12);
    }

    #[test]
    fn scaling_hits_marginals(seed: u64, rows in 1usize..7, cols in 1usize..7) {
        let mut r = rng(seed);
        let entries: Vec<(usize, usize, f64)> = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, r.gen_range(-3.0..3.0)))
            .collect();
        let k = LogKernel::new(rows, cols, entries).unwrap();
        let (dr, dc) = (random_simplex(&mut r, rows, 0.05), random_simplex(&mut r, cols, 0.05));
        let s = sinkhorn::scale_log_kernel(&k, &dr, &dc, 1e-10, 100_000, None).unwrap();
        prop_assert!(s.converged && s.violation <= 1e-10);
    }
}

#[test]
fn single_edge_graph_matches_fully() {
    let g = BipartiteGraph::new(1, 1, vec![(0, 0)]).unwrap();
    assert_eq!(g.mcm(), 1);
    assert_eq!(ddbm::greedy_matching(&g).0, 1);
    assert_eq!(ddbm::remove_overflow(&g, &[3.0]).unwrap(), vec![1.0]);
}

#[test]
fn practical_solve_certifies_small_games() {
    let mut r = rng(77);
    for _ in 0..10 {
        let g = random_game(&mut r, 6, 3, 0.5, 0.005);
        let (z, rep) = bsgame::solve(&g, 1e-6, Mode::Practical).unwrap();
        assert!(rep.certified);
        assert!(bsgame::certified_gap(&g, &z) * g.scale() <= 1e-6);
    }
}
