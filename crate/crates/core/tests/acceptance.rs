//! Acceptance suite: one pass/fail line per criterion.
//!
//! Run with `cargo test --test acceptance`; pass criterion numbers to run a subset,
//! e.g. `cargo test --test acceptance -- 9 10`.

mod common;

use std::process::Command;
use std::time::Instant;

use bsg::bsgame::{self, Mode, PdPoint, SolverConfig};
use bsg::ddbm::{self, Adversary, CroConfig, CroKind, RunConfig};
use bsg::numkit::{self, SparseMatrix};
use bsg::oracle::{self, OracleBudget};
use bsg::sinkhorn::{self, OTInstance};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    /// Soft check missed; reported but not fatal.
    Warn(String),
}

use Verdict::*;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn hessian_sandwich() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_lo = f64::INFINITY;
    let mut worst_hi = 0.0f64;
    for _ in 0..1000 {
        let (m, n) = (rng.gen_range(1..10), rng.gen_range(1..6));
        let mu = rng.gen_range(0.01..1.0);
        let eps = mu * rng.gen_range(0.01..2.0 / 9.0);
        let g = random_game(&mut rng, m, n, mu, eps);
        if g.rho() < 3.0 {
            continue;
        }
        let z = random_point(&mut rng, m, n);
        let wx: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wy: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = bsgame::hessian_form(&g, &z, &wx, &wy).unwrap();
        let d = bsgame::diag_form(&g, &z.x, &wx, &wy).unwrap();
        if !(d <= h * (1.0 + 1e-9) && h <= 4.0 * d * (1.0 + 1e-9)) {
            return Fail(format!("D = {d:e}, H = {h:e} at m={m} n={n}"));
        }
        worst_lo = worst_lo.min(h / d);
        worst_hi = worst_hi.max(h / d);
    }
    Pass(format!("H/D within [{worst_lo:.4}, {worst_hi:.4}]"))
}

fn strong_monotonicity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let (m, n) = (rng.gen_range(1..10), rng.gen_range(1..6));
        let eps = rng.gen_range(0.001..0.5);
        let mu: f64 = (eps / 2.0) * rng.gen_range(1.0..50.0);
        let g = random_game(&mut rng, m, n, mu.min(1.0), eps);
        if g.mu() < g.eps_reg() / 2.0 {
            continue;
        }
        let z = random_point(&mut rng, m, n);
        let w = random_point(&mut rng, m, n);
        let (gzx, gzy) = bsgame::grad_operator(&g, &z).unwrap();
        let (gwx, gwy) = bsgame::grad_operator(&g, &w).unwrap();
        let lhs: f64 = (0..m).map(|i| (gwx[i] - gzx[i]) * (w.x[i] - z.x[i])).sum::<f64>()
            + (0..n).map(|j| (gwy[j] - gzy[j]) * (w.y[j] - z.y[j])).sum::<f64>();
        let rhs = g.nu() * (bsgame::breg_div(&g, &z, &w).unwrap() + bsgame::breg_div(&g, &w, &z).unwrap());
        if lhs < rhs - 1e-9 * rhs.abs().max(1.0) {
            return Fail(format!("lhs {lhs:e} < nu·(V+V) = {rhs:e}"));
        }
        if rhs > 0.0 {
            worst = worst.min(lhs / rhs);
        }
    }
    Pass(format!("min ratio lhs/rhs = {worst:.4}"))
}

fn padding_error() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let (m, n) = (rng.gen_range(2..12), rng.gen_range(1..6));
        let mu = rng.gen_range(0.1..1.0);
        let ratio = rng.gen_range(2.0..200.0);
        let g = random_game(&mut rng, m, n, mu, mu / ratio);
        let mut xb: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.3) { rng.gen_range(1e-12..1e-4) } else { rng.gen_range(0.01..1.0) }).collect();
        let s: f64 = xb.iter().sum();
        xb.iter_mut().for_each(|v| *v /= s);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let delta = rng.gen_range(1e-6..0.5 / m as f64);
        let zbar = PdPoint::new(xb.clone(), y.clone());
        let z = PdPoint::new(bsgame::pad_simplex(&xb, delta), y);
        let w = random_point(&mut rng, m, n);
        let diff = bsgame::breg_div(&g, &z, &w).unwrap() - bsgame::breg_div(&g, &zbar, &w).unwrap();
        let bound = (g.rho() + 8.0 / g.rho()) * m as f64 * delta;
        if diff > bound + 1e-9 {
            return Fail(format!("V_z(w) − V_zbar(w) = {diff:e} > {bound:e}"));
        }
        worst = worst.max(diff / bound);
    }
    Pass(format!("max (V_z − V_zbar)/bound = {worst:.4}"))
}

fn iterate_stability() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let (mut first, mut second) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let (m, n) = (rng.gen_range(2..16), rng.gen_range(1..8));
        let mu = rng.gen_range(0.2..1.0);
        let ratio = rng.gen_range(73.0..300.0);
        let g = random_game(&mut rng, m, n, mu, mu / ratio);
        let mut cfg = SolverConfig::new(Mode::Theory);
        cfg.track_stability = true;
        let (_, rep) = match bsgame::solve_with(&g, 1e-6, &cfg) {
            Ok(r) => r,
            Err(e) => return Fail(format!("solve failed: {e}")),
        };
        let s = rep.stability.expect("tracked");
        first = first.max(s.first_half);
        second = second.max(s.second_half);
    }
    let band = 1.0 / 9.0 + 1e-9;
    check(first <= band && second <= band, format!("max |log ratio|: first half {first:.4}, second half {second:.4} (band 1/9)"))
}

fn solver_vs_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let sigma = 1e-6;
    let (mut worst_gap, mut worst_l1) = (0.0f64, 0.0f64);
    for k in 0..50 {
        let (m, n) = (rng.gen_range(2..=40), rng.gen_range(1..=20));
        let mu = rng.gen_range(0.2..1.0);
        let ratio = rng.gen_range(73.0..200.0);
        let g = binding_game(&mut rng, m, n, mu, mu / ratio);
        let (z, rep) = match bsgame::solve(&g, sigma, Mode::Theory) {
            Ok(r) => r,
            Err(e) => return Fail(format!("instance {k}: {e}")),
        };
        let o = match oracle::brute_reg_optimum(&g, &OracleBudget::with_tolerance(1e-13)) {
            Ok(o) => o,
            Err(e) => return Fail(format!("instance {k}: oracle {e}")),
        };
        let l1 = numkit::l1_dist(&z.x, &o.x);
        let bound = (2.0 * sigma / g.mu()).sqrt() + 1e-6;
        if !rep.certified || rep.final_gap > sigma || l1 > bound {
            return Fail(format!("instance {k} (m={m}, n={n}): gap {:e}, l1 {l1:e} vs {bound:e}", rep.final_gap));
        }
        worst_gap = worst_gap.max(rep.final_gap);
        worst_l1 = worst_l1.max(l1 / bound);
    }
    Pass(format!("max gap {worst_gap:.2e}, max l1/bound {worst_l1:.3}"))
}

fn acceleration_trend() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mu = 1.0;
    let epsilons = [1e-2, 2.5e-3, 6.25e-4];
    let mut pts = Vec::new();
    let mut capped = false;
    for _ in 0..3 {
        let a = random_matrix(&mut rng, 12, 6, 0.4);
        let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let c: Vec<f64> = (0..12).map(|_| 20.0 * rng.gen_range(-1.0..1.0)).collect();
        let mut iters = Vec::new();
        for &eps in &epsilons {
            let g = bsgame::RegGame::new(a.clone(), b.clone(), c.clone(), mu, eps).unwrap();
            let (_, rep) = bsgame::solve(&g, 1e-6, Mode::Theory).unwrap();
            capped |= !rep.certified;
            iters.push(rep.outer_iterations.max(1) as f64);
        }
        pts.push(iters);
    }
    let xs: Vec<f64> = epsilons.iter().map(|e| (1.0 / e).ln()).collect();
    let mean_iters: Vec<f64> = (0..3).map(|k| pts.iter().map(|p| p[k].ln()).sum::<f64>() / pts.len() as f64).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, mean_iters.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&mean_iters).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let detail = format!("slope {slope:.3} (outer iterations {:?})", mean_iters.iter().map(|v| v.exp().round()).collect::<Vec<_>>());
    if (0.3..=0.8).contains(&slope) {
        Pass(detail)
    } else if capped {
        Warn(format!("{detail}; caps reached"))
    } else {
        Warn(detail)
    }
}

fn cost_truncation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let budget = OracleBudget::with_tolerance(1e-13);
    let mut worst = f64::NEG_INFINITY;
    let mut truncated = 0;
    for _ in 0..20 {
        let (m, n) = (rng.gen_range(3..9), rng.gen_range(1..4));
        let mu = rng.gen_range(0.5..1.0);
        let mut t = Vec::new();
        for i in 0..m {
            for j in 0..n {
                let v: f64 = rng.gen_range(0.1..1.0);
                t.push((i, j, if rng.gen_bool(0.5) { v } else { -v } / n as f64));
            }
        }
        let a = SparseMatrix::from_triplets(m, n, &t).unwrap();
        let b = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let c = (0..m).map(|_| rng.gen_range(0.0..10.0)).collect();
        let g = bsgame::RegGame::new(a, b, c, mu, mu / 100.0).unwrap();
        let full = oracle::brute_reg_optimum(&g, &budget).unwrap().value;
        for tau in [4.0, 8.0] {
            let (tg, keep) = bsgame::truncate_costs(&g, tau).unwrap();
            truncated += usize::from(keep.len() < m);
            let restricted = oracle::brute_reg_optimum(&tg, &budget).unwrap().value;
            let bound = g.mu() * m as f64 * (-(tau - 3.0) / g.mu()).exp();
            if restricted > full + bound + 1e-9 {
                return Fail(format!("tau {tau}: truncated {restricted} > full {full} + {bound:e}"));
            }
            worst = worst.max(restricted - full - bound);
        }
    }
    Pass(format!("{truncated} nontrivial truncations, max excess over bound {worst:.2e}"))
}

fn remove_overflow_bounds() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    for k in 0..1000 {
        let (nl, nr) = (rng.gen_range(1..8), rng.gen_range(1..8));
        let g = random_graph(&mut rng, nl, nr, 0.5);
        let ell: Vec<f64> = (0..g.m()).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.5) }).collect();
        let out = ddbm::remove_overflow(&g, &ell).unwrap();
        let overflow: f64 = g.loads(&ell).iter().map(|s| (s - 1.0).max(0.0)).sum();
        let loss = ell.iter().sum::<f64>() - out.iter().sum::<f64>();
        let ok = out.iter().zip(&ell).all(|(a, b)| *a <= *b)
            && g.loads(&out).iter().all(|&s| s <= 1.0 + 1e-12)
            && loss <= overflow + 1e-12;
        if !ok {
            return Fail(format!("case {k}: loss {loss} vs overflow {overflow}"));
        }
    }
    Pass("1000 cases: monotone, feasible, loss within overflow".into())
}

fn ddbm_grid() -> Vec<(String, ddbm::RunLog, f64, usize)> {
    let mut out = Vec::new();
    for &n in &[20usize, 50] {
        for &eps in &[0.1, 0.25] {
            for adv in 0..3 {
                let mut rng = ChaCha8Rng::seed_from_u64(900 + n as u64);
                let g = random_graph(&mut rng, n, n, 0.2);
                let mut a: Box<dyn Adversary> = match adv {
                    0 => Box::new(ddbm::MaxWeight),
                    1 => Box::new(ddbm::RandomOrder::new(17)),
                    _ => Box::new(ddbm::FixedOrder::new((0..g.m()).rev().collect())),
                };
                let cfg = RunConfig { audit: true, timestamps: false, ..RunConfig::default() };
                let log = ddbm::dec_matching_run(&g, eps, a.as_mut(), &cfg).unwrap();
                let name = ["max-weight", "random", "fixed"][adv];
                out.push((format!("n={n} eps={eps} {name}"), log, eps, g.m()));
            }
        }
    }
    out
}

fn ddbm_approximation(runs: &[(String, ddbm::RunLog, f64, usize)], secs: f64) -> Verdict {
    let mut worst = f64::INFINITY;
    for (name, log, eps, _) in runs {
        if !log.violations.is_empty() {
            return Fail(format!("{name}: {}", log.violations[0]));
        }
        if log.events.last().map(|e| e.event) != Some(ddbm::EventKind::Terminate) {
            return Fail(format!("{name}: stream did not run to termination"));
        }
        worst = worst.min(log.worst_ratio.unwrap_or(1.0) - (1.0 - eps));
    }
    check(
        secs <= 180.0,
        format!("{} runs, min margin over (1−ε) {worst:.4}, {secs:.1}s", runs.len()),
    )
}

fn ddbm_recompute_budget(runs: &[(String, ddbm::RunLog, f64, usize)]) -> Verdict {
    let mut worst = 0.0f64;
    for (name, log, eps, m) in runs {
        let bound = 10.0 * 256.0 * (*m as f64).ln() / (eps * eps);
        for (p, &r) in log.recompute_counts().iter().enumerate() {
            if r as f64 > bound {
                return Fail(format!("{name} phase {p}: {r} recomputes > {bound:.0}"));
            }
            worst = worst.max(r as f64 / bound);
        }
    }
    Pass(format!("max recomputes/bound = {worst:.4}"))
}

fn cro_properties() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let budget = OracleBudget::with_tolerance(1e-13);
    let eps = 0.1;
    let cfg = CroConfig { kind: CroKind::BoxSimplex, ..CroConfig::default() };
    let (mut strong, mut approx, mut sink) = (0, 0, 0);
    let mut worst_sc = f64::INFINITY;
    while strong < 10 {
        let g = random_graph(&mut rng, 3, 4, 0.6);
        if g.m() < 3 || g.m() > 12 {
            continue;
        }
        let m_approx = ddbm::greedy_matching(&g).0 as f64;
        let all: Vec<usize> = (0..g.m()).collect();
        let sub: Vec<usize> = all.iter().copied().filter(|_| rng.gen_bool(0.7)).collect();
        if sub.is_empty() || sub.len() == all.len() {
            continue;
        }
        let cro = ddbm::build_cro_bs(&g, &all, m_approx, eps, &cfg).unwrap();
        let cro_sub = ddbm::build_cro_bs(&g, &sub, m_approx, eps, &cfg).unwrap();
        let (o, o_sub) = match (
            oracle::brute_reg_optimum(cro.game().unwrap(), &budget),
            oracle::brute_reg_optimum(cro_sub.game().unwrap(), &budget),
        ) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return Fail(format!("oracle: {e}")),
        };
        let mut x_sub = vec![0.0; g.m() + 1];
        for (k, &e) in sub.iter().enumerate() {
            x_sub[e] = o_sub.x[k];
        }
        x_sub[g.m()] = o_sub.x[sub.len()];
        let kl = gen_kl(&x_sub, &o.x);
        let beta = cro.game().unwrap().mu();
        let lhs = o_sub.value - o.value;
        if lhs < beta * kl - 1e-8 {
            return Fail(format!("value increase {lhs:e} < beta·KL = {:e}", beta * kl));
        }
        if kl > 0.0 {
            worst_sc = worst_sc.min(lhs / (beta * kl));
        }
        strong += 1;

        for _ in 0..20 {
            let ell: Vec<f64> = (0..g.m()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let feas = ddbm::remove_overflow(&g, &ell).unwrap();
            let x: Vec<f64> = feas.iter().map(|v| v / cro.scale).collect();
            let f = cro.value(&x).unwrap();
            let size: f64 = feas.iter().sum();
            if (-f - size).abs() > eps / 128.0 * m_approx + 1e-8 {
                return Fail(format!("|−f − 8M‖x‖| = {:e} > {:e}", (-f - size).abs(), eps / 128.0 * m_approx));
            }
            approx += 1;
        }

        let layout = ddbm::ExtendedLayout::new(&g);
        let sc = ddbm::build_cro_sinkhorn(&g, &all, m_approx, eps, &layout, &CroConfig::default()).unwrap();
        let (kernel, dr, dc, _) = sc.scaling_problem().unwrap();
        let mut logk = vec![vec![f64::NEG_INFINITY; kernel.cols()]; kernel.rows()];
        for &(i, j, w) in kernel.entries() {
            logk[i][j] = w;
        }
        let fp = match oracle::sinkhorn_fixpoint_log(&logk, dr, dc, &OracleBudget::with_tolerance(1e-12)) {
            Ok(p) => p,
            Err(e) => return Fail(format!("fixpoint: {e}")),
        };
        let plan: Vec<f64> = kernel.entries().iter().map(|&(i, j, _)| fp.plan[i][j]).collect();
        let value = sc.value(&plan).unwrap();
        let mcm = g.mcm() as f64;
        if (value + mcm).abs() > eps / 8.0 * mcm {
            return Fail(format!("scaling objective {value} vs −MCM = {}", -mcm));
        }
        sink += 1;
    }
    Pass(format!(
        "{strong} nested pairs (min ratio {worst_sc:.3}), {approx} feasible matchings, {sink} scaling objectives"
    ))
}

fn ot_round_bounds() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(112);
    let mut worst = 0.0f64;
    for k in 0..500 {
        let (l, r) = (rng.gen_range(1..9), rng.gen_range(1..9));
        let x: Vec<Vec<f64>> = (0..l).map(|_| (0..r).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..0.3) }).collect()).collect();
        let (dl, dr) = (random_simplex(&mut rng, l, 0.0), random_simplex(&mut rng, r, 0.0));
        let y = sinkhorn::ot_round(&x, &dl, &dr).unwrap();
        let exact = sinkhorn::marginal_violation(&y, &dl, &dr);
        let viol = sinkhorn::marginal_violation(&x, &dl, &dr);
        let moved: f64 = x.iter().flatten().zip(y.iter().flatten()).map(|(a, b)| (a - b).abs()).sum();
        if exact > 1e-12 || moved > 2.0 * viol + 1e-12 {
            return Fail(format!("case {k}: marginals off by {exact:e}, moved {moved} vs 2·{viol}"));
        }
        if viol > 0.0 {
            worst = worst.max(moved / (2.0 * viol));
        }
    }
    Pass(format!("500 cases, max movement/(2·violation) = {worst:.3}"))
}

struct OtCase {
    inst: OTInstance,
    opt: f64,
    plan: Vec<Vec<f64>>,
}

fn ot_cases() -> Vec<OtCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(113);
    let mut out = Vec::new();
    for size in 2..=10 {
        for &mu in &[0.05, 0.2] {
            let inst = random_ot(&mut rng, size, size, mu);
            let fp = oracle::sinkhorn_fixpoint(inst.cost(), inst.d_l(), inst.d_r(), mu, &OracleBudget::with_tolerance(1e-13)).unwrap();
            let opt = oracle::transport_objective(inst.cost(), &fp.plan, mu);
            out.push(OtCase { inst, opt, plan: fp.plan });
        }
    }
    out
}

fn l1(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).sum()
}

fn unaccel_sinkhorn(cases: &[OtCase], eps: f64, objs: &mut Vec<f64>) -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    for c in cases {
        let (plan, _) = sinkhorn::solve_unaccel(&c.inst, eps, None, 10_000_000).unwrap();
        let obj = sinkhorn::sinkhorn_objective(&c.inst, &plan).unwrap();
        let dist = l1(&plan.x, &c.plan);
        let bound = (2.0 * eps / c.inst.mu()).sqrt();
        if obj > c.opt + eps || dist > bound + 1e-9 {
            return Fail(format!("{}x{} mu={}: excess {:e}, l1 {dist:e}", c.inst.left(), c.inst.right(), c.inst.mu(), obj - c.opt));
        }
        worst = worst.max(obj - c.opt);
        objs.push(obj);
    }
    Pass(format!("{} instances, max excess {worst:.2e} (ε = {eps})", cases.len()))
}

fn accel_sinkhorn(cases: &[OtCase], eps: f64, unaccel: &[f64]) -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut worst_agree = 0.0f64;
    let cfg = SolverConfig::new(Mode::Practical);
    for (k, c) in cases.iter().enumerate() {
        if c.inst.mu() < 36.0 * eps {
            continue;
        }
        let (plan, _) = match sinkhorn::solve_via_bsgame(&c.inst, eps, &cfg) {
            Ok(r) => r,
            Err(e) => return Fail(format!("{e}")),
        };
        let obj = sinkhorn::sinkhorn_objective(&c.inst, &plan).unwrap();
        let agree = unaccel.get(k).map_or(0.0, |u| (obj - u).abs());
        if obj > c.opt + eps || agree > 2.0 * eps {
            return Fail(format!("{}x{} mu={}: excess {:e}, disagreement {agree:e}", c.inst.left(), c.inst.right(), c.inst.mu(), obj - c.opt));
        }
        worst = worst.max(obj - c.opt);
        worst_agree = worst_agree.max(agree);
    }
    Pass(format!("max excess {worst:.2e}, max cross-method gap {worst_agree:.2e}"))
}

fn demand_perturbation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(115);
    let budget = OracleBudget::with_tolerance(1e-13);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let (l, r) = (rng.gen_range(1..5), rng.gen_range(1..5));
        let mu = rng.gen_range(0.05..1.0);
        let inst = random_ot(&mut rng, l, r, mu);
        let (dl2, dr2) = (random_simplex(&mut rng, l, 0.01), random_simplex(&mut rng, r, 0.01));
        let opt = |dl: &[f64], dr: &[f64]| {
            let fp = oracle::sinkhorn_fixpoint(inst.cost(), dl, dr, mu, &budget).unwrap();
            oracle::transport_objective(inst.cost(), &fp.plan, mu)
        };
        let (a, b) = (opt(inst.d_l(), inst.d_r()), opt(&dl2, &dr2));
        let m = (l * r) as f64;
        let dist = numkit::l1_dist(inst.d_l(), &dl2) + numkit::l1_dist(inst.d_r(), &dr2);
        let bound = (2.0 * inst.cost_max() + 66.0 * mu * m.ln()) * dist + mu * m.powi(-30);
        if a > b + bound + 1e-9 {
            return Fail(format!("OPT(d) = {a} > OPT(d') + {bound} = {}", b + bound));
        }
        worst = worst.max((a - b) / bound.max(1e-300));
    }
    Pass(format!("max (OPT(d) − OPT(d'))/bound = {worst:.3}"))
}

fn cli_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let mut rng = ChaCha8Rng::seed_from_u64(116);
    let g = random_graph(&mut rng, 8, 8, 0.4);
    std::fs::write(p("g.txt"), bsg::cli::render_graph(&g)).unwrap();
    std::fs::write(p("s.txt"), "3\n@adversary random 7\n").unwrap();
    let inst = random_ot(&mut rng, 3, 3, 0.2);
    std::fs::write(p("ot.csv"), bsg::cli::render_ot(&inst)).unwrap();
    let game = random_game(&mut rng, 6, 3, 0.5, 0.005);
    let file = bsg::cli::GameFile {
        m: 6,
        n: 3,
        mu: 0.5,
        eps: 0.005,
        c: game.c().to_vec(),
        b: game.b().to_vec(),
        triplets: game.a().triplets(),
    };
    std::fs::write(p("game.txt"), file.render()).unwrap();
    let commands: Vec<Vec<String>> = vec![
        vec!["ddbm".into(), p("g.txt").display().to_string(), p("s.txt").display().to_string(), "--epsilon".into(), "0.2".into(), "--audit".into(), "--no-timestamps".into()],
        vec!["sinkhorn".into(), p("ot.csv").display().to_string(), "--method".into(), "both".into()],
        vec!["solve".into(), p("game.txt").display().to_string(), "--sigma".into(), "1e-6".into()],
    ];
    for args in commands {
        let run = || Command::new(env!("CARGO_BIN_EXE_bsg")).args(&args).env_remove("BSG_LOG").output().unwrap();
        let (a, b) = (run(), run());
        if !a.status.success() || a.stdout.is_empty() {
            return Fail(format!("{} exited {:?}: {}", args[0], a.status.code(), String::from_utf8_lossy(&a.stderr)));
        }
        if a.stdout != b.stdout {
            return Fail(format!("{} output differs between runs", args[0]));
        }
    }
    Pass("ddbm, sinkhorn and solve outputs byte-identical across runs".into())
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |k: usize| selected.is_empty() || selected.contains(&k);
    let mut failures = 0;
    let mut report = |k: usize, name: &str, t: Instant, v: Verdict| {
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failures += 1;
                ("FAIL", d)
            }
            Warn(d) => ("WARN", d),
        };
        println!("[{tag}] {k:>2} {name}: {detail} [{secs:.1}s]");
    };
    let simple: [(usize, &str, fn() -> Verdict); 8] = [
        (1, "hessian sandwich", hessian_sandwich),
        (2, "strong monotonicity", strong_monotonicity),
        (3, "padding error", padding_error),
        (4, "iterate stability", iterate_stability),
        (5, "solver accuracy vs oracle", solver_vs_oracle),
        (6, "acceleration trend", acceleration_trend),
        (7, "cost truncation", cost_truncation),
        (8, "overflow removal", remove_overflow_bounds),
    ];
    for (k, name, f) in simple {
        if want(k) {
            let t = Instant::now();
            report(k, name, t, f());
        }
    }
    if want(9) || want(10) {
        let t = Instant::now();
        let runs = ddbm_grid();
        let secs = t.elapsed().as_secs_f64();
        if want(9) {
            report(9, "decremental matching approximation", t, ddbm_approximation(&runs, secs));
        }
        if want(10) {
            report(10, "recompute budget", Instant::now(), ddbm_recompute_budget(&runs));
        }
    }
    if want(11) {
        let t = Instant::now();
        report(11, "matching objective family", t, cro_properties());
    }
    if want(12) {
        let t = Instant::now();
        report(12, "transport rounding", t, ot_round_bounds());
    }
    if want(13) || want(14) {
        let eps = 1e-3;
        let cases = ot_cases();
        let mut objs = Vec::new();
        let t = Instant::now();
        let v13 = unaccel_sinkhorn(&cases, eps, &mut objs);
        if want(13) {
            report(13, "unaccelerated Sinkhorn", t, v13);
        }
        if want(14) {
            let t = Instant::now();
            report(14, "accelerated Sinkhorn", t, accel_sinkhorn(&cases, eps, &objs));
        }
    }
    if want(15) {
        let t = Instant::now();
        report(15, "demand perturbation", t, demand_perturbation());
    }
    if want(16) {
        let t = Instant::now();
        report(16, "CLI determinism", t, cli_determinism());
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
