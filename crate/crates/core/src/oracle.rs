//! Brute-force reference solvers used to audit the main algorithms.
//!
//! Every routine here uses a different algorithm or update order than the code
//! it checks, and refuses instances beyond desk scale instead of degrading.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bsgame::RegGame;
use crate::error::{Error, Result};

/// Limits shared by the iterative oracles.
#[derive(Debug, Clone)]
pub struct OracleBudget {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub wall_time: Duration,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self { max_iterations: 1_000_000, tolerance: 1e-12, wall_time: Duration::from_secs(60) }
    }
}

impl OracleBudget {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self { tolerance, ..Self::default() }
    }
}

fn adjacency(n_left: usize, n_right: usize, edges: &[(usize, usize)]) -> Result<Vec<Vec<usize>>> {
    let mut adj = vec![Vec::new(); n_left];
    for &(u, v) in edges {
        if u >= n_left || v >= n_right {
            return Err(Error::Instance(format!("edge ({u},{v}) out of range")));
        }
        adj[u].push(v);
    }
    Ok(adj)
}

/// Maximum cardinality matching by Hopcroft–Karp phases. Returns the partner of each left vertex.
pub fn max_matching(n_left: usize, n_right: usize, edges: &[(usize, usize)]) -> Result<Vec<Option<usize>>> {
    const INF: usize = usize::MAX;
    let adj = adjacency(n_left, n_right, edges)?;
    let mut match_l: Vec<Option<usize>> = vec![None; n_left];
    let mut match_r: Vec<Option<usize>> = vec![None; n_right];
    let mut dist = vec![INF; n_left];
    loop {
        let mut queue = VecDeque::new();
        for u in 0..n_left {
            if match_l[u].is_none() {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = INF;
            }
        }
        let mut free_layer = INF;
        while let Some(u) = queue.pop_front() {
            if dist[u] >= free_layer {
                continue;
            }
            for &v in &adj[u] {
                match match_r[v] {
                    None => free_layer = free_layer.min(dist[u] + 1),
                    Some(w) if dist[w] == INF => {
                        dist[w] = dist[u] + 1;
                        queue.push_back(w);
                    }
                    _ => {}
                }
            }
        }
        if free_layer == INF {
            break;
        }
        let mut it = vec![0usize; n_left];
        for root in 0..n_left {
            if match_l[root].is_some() || dist[root] != 0 {
                continue;
            }
            let mut stack = vec![root];
            while let Some(&w) = stack.last() {
                if it[w] == adj[w].len() {
                    dist[w] = INF;
                    stack.pop();
                    if let Some(&p) = stack.last() {
                        it[p] += 1;
                    }
                    continue;
                }
                let v = adj[w][it[w]];
                match match_r[v] {
                    None if dist[w] + 1 == free_layer => {
                        for &l in &stack {
                            let r = adj[l][it[l]];
                            match_l[l] = Some(r);
                            match_r[r] = Some(l);
                        }
                        break;
                    }
                    Some(u2) if dist[u2] != INF && dist[u2] == dist[w] + 1 => stack.push(u2),
                    _ => it[w] += 1,
                }
            }
        }
    }
    Ok(match_l)
}

/// Size of a maximum cardinality matching.
pub fn hopcroft_karp(n_left: usize, n_right: usize, edges: &[(usize, usize)]) -> Result<usize> {
    Ok(max_matching(n_left, n_right, edges)?.iter().filter(|p| p.is_some()).count())
}

/// Largest matching found by enumerating edge subsets. At most 20 edges.
pub fn exhaustive_mcm(n_left: usize, n_right: usize, edges: &[(usize, usize)]) -> Result<usize> {
    if edges.len() > 20 {
        return Err(Error::Refused(format!("exhaustive search over {} edges (limit 20)", edges.len())));
    }
    adjacency(n_left, n_right, edges)?;
    let mut best = 0;
    for mask in 0u32..(1u32 << edges.len()) {
        let size = mask.count_ones() as usize;
        if size <= best {
            continue;
        }
        let mut used_l = vec![false; n_left];
        let mut used_r = vec![false; n_right];
        let ok = edges.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).all(|(_, &(u, v))| {
            let free = !used_l[u] && !used_r[v];
            used_l[u] = true;
            used_r[v] = true;
            free
        });
        if ok {
            best = size;
        }
    }
    Ok(best)
}

/// Certified optimum of a regularized game.
#[derive(Debug, Clone, Serialize)]
pub struct RegOptimum {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Primal value minus dual value, both evaluated here.
    pub gap: f64,
    pub value: f64,
    pub iterations: usize,
    pub method: &'static str,
}

#[derive(Clone)]
struct DenseGame {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    mu: f64,
    eps: f64,
}

impl DenseGame {
    fn m(&self) -> usize {
        self.c.len()
    }
    fn n(&self) -> usize {
        self.b.len()
    }

    /// Column sums `Aᵀx` and `|A|ᵀx`, accumulated column by column.
    fn col_sums(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut s, mut t) = (vec![0.0; self.n()], vec![0.0; self.n()]);
        for j in 0..self.n() {
            for i in 0..self.m() {
                s[j] += self.a[i][j] * x[i];
                t[j] += self.a[i][j].abs() * x[i];
            }
        }
        (s, t)
    }

    fn y_star(&self, s: &[f64], t: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|j| {
                let r = (s[j] - self.b[j]) / (self.eps * t[j]);
                if r.is_nan() {
                    0.0
                } else {
                    r.clamp(0.0, 1.0)
                }
            })
            .collect()
    }

    fn primal(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (s, t) = self.col_sums(x);
        let y = self.y_star(&s, &t);
        let mut v = 0.0;
        for i in 0..self.m() {
            v += self.c[i] * x[i];
            if x[i] > 0.0 {
                v += self.mu * x[i] * x[i].ln();
            }
        }
        for j in 0..self.n() {
            v += y[j] * (s[j] - self.b[j]) - 0.5 * self.eps * y[j] * y[j] * t[j];
        }
        (v, y)
    }

    fn primal_grad(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        (0..self.m())
            .map(|i| {
                let mut g = self.c[i] + self.mu * (1.0 + x[i].ln());
                for j in 0..self.n() {
                    g += self.a[i][j] * y[j] - 0.5 * self.eps * self.a[i][j].abs() * y[j] * y[j];
                }
                g
            })
            .collect()
    }

    /// `(v, x(y))` with `v = Ay + c − (ε/2)|A|y²` and `x(y)` its Gibbs distribution.
    fn inner(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let v: Vec<f64> = (0..self.m())
            .map(|i| {
                let mut s = self.c[i];
                for j in 0..self.n() {
                    s += self.a[i][j] * y[j] - 0.5 * self.eps * self.a[i][j].abs() * y[j] * y[j];
                }
                s
            })
            .collect();
        let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = v.iter().map(|vi| (-(vi - vmin) / self.mu).exp()).collect();
        let z: f64 = w.iter().sum();
        let x: Vec<f64> = w.iter().map(|wi| wi / z).collect();
        let dual = vmin - self.mu * z.ln() - (0..self.n()).map(|j| self.b[j] * y[j]).sum::<f64>();
        (v, x, dual)
    }

    fn dual(&self, y: &[f64]) -> f64 {
        self.inner(y).2
    }
}

/// Certified optimum of `max_y f(x, y)` over the simplex, to gap `budget.tolerance`.
///
/// Runs entropic mirror descent with backtracking on the primal; if that stalls,
/// switches to projected Newton ascent on the concave dual over the box, which
/// reaches machine-precision gaps on small instances.
pub fn brute_reg_optimum(game: &RegGame, budget: &OracleBudget) -> Result<RegOptimum> {
    let (m, n) = (game.m(), game.n());
    if m > 200 {
        return Err(Error::Refused(format!("simplex dimension {m} exceeds 200")));
    }
    let g = DenseGame {
        a: game.a().to_dense(),
        b: game.b().to_vec(),
        c: game.c().to_vec(),
        mu: game.mu(),
        eps: game.eps_reg(),
    };
    let start = Instant::now();
    let tol = budget.tolerance;

    let mut x = vec![1.0 / m as f64; m];
    let (mut fx, mut y) = g.primal(&x);
    let mut best_gap = fx - g.dual(&y).max(g.dual(&vec![0.0; n]));
    if m == 1 || best_gap <= tol {
        return Ok(RegOptimum { x, y, gap: best_gap.max(0.0), value: fx, iterations: 0, method: "mirror-descent" });
    }
    let md_iters = (budget.max_iterations / 2).min(20_000);
    let mut eta = 1.0 / g.mu;
    let mut iterations = 0;
    let mut stalled = 0;
    while iterations < md_iters && start.elapsed() < budget.wall_time {
        iterations += 1;
        let grad = g.primal_grad(&x, &y);
        let gmin = grad.iter().copied().fold(f64::INFINITY, f64::min);
        let mut accepted = false;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi.ln() - eta * (gi - gmin)).collect();
            let lmax = xn.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in xn.iter_mut() {
                *v = (*v - lmax).exp();
                s += *v;
            }
            xn.iter_mut().for_each(|v| *v /= s);
            let (fn_, yn) = g.primal(&xn);
            let lin: f64 = grad.iter().zip(&xn).zip(&x).map(|((gi, a), b)| gi * (a - b)).sum();
            let kl: f64 = xn.iter().zip(&x).map(|(a, b)| if *a > 0.0 { a * (a / b).ln() - a + b } else { *b }).sum();
            if fn_ <= fx + lin + kl / eta + 1e-15 * fx.abs() {
                let improved = fn_ < fx - 1e-15 * fx.abs();
                x = xn;
                fx = fn_;
                y = yn;
                eta *= 1.5;
                accepted = true;
                stalled = if improved { 0 } else { stalled + 1 };
                break;
            }
            eta *= 0.5;
        }
        let gap = fx - g.dual(&y);
        best_gap = best_gap.min(gap);
        if gap <= tol {
            return Ok(RegOptimum { x, y, gap: gap.max(0.0), value: fx, iterations, method: "mirror-descent" });
        }
        if !accepted || stalled > 20 {
            break;
        }
    }

    let mut out = dual_newton(&g, &y, tol, 500, start + budget.wall_time);
    iterations += out.iterations;
    best_gap = best_gap.min(out.best_gap);
    if out.gap > tol {
        // Continuation: re-solve with both regularizers inflated, shrinking them back
        // by a factor of 4 per stage from the previous stage's dual point.
        let stages = (0.05 / g.mu).log(4.0).ceil().max(0.0) as i32;
        let mut yc = y.clone();
        for k in (0..=stages).rev() {
            let s = 4f64.powi(k);
            let gk = DenseGame { mu: g.mu * s, eps: g.eps * s, ..g.clone() };
            let o = dual_newton(&gk, &yc, tol, 200, start + budget.wall_time);
            iterations += o.iterations;
            yc = o.y;
        }
        out = dual_newton(&g, &yc, tol, 500, start + budget.wall_time);
        iterations += out.iterations;
        best_gap = best_gap.min(out.best_gap);
    }
    if out.gap <= tol {
        return Ok(RegOptimum { x: out.x, y: out.y, gap: out.gap.max(0.0), value: out.value, iterations, method: "dual-newton" });
    }
    Err(Error::Refused(format!("regularized optimum not certified: best gap {best_gap:e} > {tol:e}")))
}

struct NewtonOutcome {
    x: Vec<f64>,
    y: Vec<f64>,
    gap: f64,
    best_gap: f64,
    value: f64,
    iterations: usize,
}

/// Projected Newton ascent on the concave dual over the box, stopping at gap `tol`.
fn dual_newton(g: &DenseGame, y0: &[f64], tol: f64, max_iters: usize, deadline: Instant) -> NewtonOutcome {
    let (m, n) = (g.m(), g.n());
    let mut yd = y0.to_vec();
    let mut ld = g.dual(&yd);
    let mut best_gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters && Instant::now() < deadline {
        iterations += 1;
        let (_, xg, _) = g.inner(&yd);
        let (_, tcol) = g.col_sums(&xg);
        let grad: Vec<f64> = (0..n)
            .map(|j| {
                let mut s = -g.b[j];
                for i in 0..m {
                    s += (g.a[i][j] - g.eps * g.a[i][j].abs() * yd[j]) * xg[i];
                }
                s
            })
            .collect();
        let (fp, _) = g.primal(&xg);
        let gap = fp - ld;
        best_gap = best_gap.min(gap);
        if gap <= tol {
            return NewtonOutcome { x: xg, y: yd, gap, best_gap, value: fp, iterations };
        }
        let free: Vec<usize> =
            (0..n).filter(|&j| !((yd[j] <= 0.0 && grad[j] <= 0.0) || (yd[j] >= 1.0 && grad[j] >= 0.0))).collect();
        if free.is_empty() {
            break;
        }
        let k = free.len();
        let jac = DMatrix::from_fn(m, k, |i, q| {
            let j = free[q];
            g.a[i][j] - g.eps * g.a[i][j].abs() * yd[j]
        });
        let xv = DVector::from_column_slice(&xg);
        let jx = jac.tr_mul(&xv);
        let dx = DMatrix::from_diagonal(&xv);
        let mut h = jac.tr_mul(&(&dx * &jac)) - &jx * jx.transpose();
        h /= g.mu;
        for (q, &j) in free.iter().enumerate() {
            h[(q, q)] += g.eps * tcol[j];
        }
        let scaled: Vec<f64> = free.iter().enumerate().map(|(q, &j)| grad[j] / h[(q, q)].max(1e-300)).collect();
        let rhs = DVector::from_iterator(k, free.iter().map(|&j| grad[j]));
        let dir = match h.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                let shift = 1e-12 * h.diagonal().amax().max(1e-300);
                for q in 0..k {
                    h[(q, q)] += shift;
                }
                match h.cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None => rhs.clone(),
                }
            }
        };
        let mut moved = false;
        for dir in [dir.as_slice(), scaled.as_slice()] {
            let mut t = 1.0;
            for _ in 0..80 {
                let mut yn = yd.clone();
                for (q, &j) in free.iter().enumerate() {
                    yn[j] = (yd[j] + t * dir[q]).clamp(0.0, 1.0);
                }
                let ln = g.dual(&yn);
                let ascent: f64 = (0..n).map(|j| grad[j] * (yn[j] - yd[j])).sum();
                if ascent > 0.0 && ln >= ld + 1e-4 * ascent {
                    moved = yn != yd;
                    yd = yn;
                    ld = ln;
                    break;
                }
                t *= 0.5;
            }
            if moved {
                break;
            }
        }
        if !moved {
            break;
        }
    }
    let (_, xg, _) = g.inner(&yd);
    let (fp, _) = g.primal(&xg);
    let gap = fp - ld;
    NewtonOutcome { x: xg, y: yd, gap, best_gap: best_gap.min(gap), value: fp, iterations }
}

/// Machine-precision entropic transport plan.
#[derive(Debug, Clone, Serialize)]
pub struct FixpointPlan {
    pub plan: Vec<Vec<f64>>,
    /// Log scalings: `plan_ij = exp(u_i − C_ij/μ + v_j)`, or `exp(u_i + logK_ij + v_j)` for the log-kernel variant.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations: usize,
    pub violation: f64,
}

fn check_demands(d: &[f64], what: &str) -> Result<()> {
    if d.is_empty() || d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Instance(format!("{what} demands must be strictly positive")));
    }
    Ok(())
}

/// Optimal plan of `min ⟨C, X⟩ + μ Σ X log X` with marginals `d_l`, `d_r`.
///
/// Dense multiplicative scaling of `exp(−(C − min C)/μ)`, columns fitted before rows.
pub fn sinkhorn_fixpoint(
    cost: &[Vec<f64>],
    d_l: &[f64],
    d_r: &[f64],
    mu: f64,
    budget: &OracleBudget,
) -> Result<FixpointPlan> {
    let (l, r) = (d_l.len(), d_r.len());
    if l > 64 || r > 64 {
        return Err(Error::Refused(format!("{l}x{r} exceeds the 64x64 fixpoint limit")));
    }
    check_demands(d_l, "left")?;
    check_demands(d_r, "right")?;
    if cost.len() != l || cost.iter().any(|row| row.len() != r) {
        return Err(Error::Instance("cost shape does not match demands".into()));
    }
    if !(mu > 0.0) {
        return Err(Error::Instance("mu must be positive".into()));
    }
    let cmin = cost.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let logk: Vec<Vec<f64>> = cost.iter().map(|row| row.iter().map(|c| -(c - cmin) / mu).collect()).collect();
    if logk.iter().flatten().any(|&v| v < -700.0) {
        return Err(Error::Refused("kernel underflows; use the log-domain fixpoint".into()));
    }
    let k: Vec<Vec<f64>> = logk.iter().map(|row| row.iter().map(|v| v.exp()).collect()).collect();
    let mut a = vec![1.0; l];
    let mut b = vec![1.0; r];
    let tol = budget.tolerance.max(1e-13);
    let start = Instant::now();
    let mut violation = f64::INFINITY;
    let mut it = 0;
    while it < budget.max_iterations && start.elapsed() < budget.wall_time {
        it += 1;
        for j in 0..r {
            let s: f64 = (0..l).map(|i| a[i] * k[i][j]).sum();
            b[j] = d_r[j] / s;
        }
        for i in 0..l {
            let s: f64 = (0..r).map(|j| k[i][j] * b[j]).sum();
            a[i] = d_l[i] / s;
        }
        violation = (0..r)
            .map(|j| ((0..l).map(|i| a[i] * k[i][j] * b[j]).sum::<f64>() - d_r[j]).abs())
            .sum();
        if violation <= tol {
            let plan = (0..l).map(|i| (0..r).map(|j| a[i] * k[i][j] * b[j]).collect()).collect();
            let u = a.iter().map(|v| v.ln() + cmin / mu).collect();
            return Ok(FixpointPlan { plan, u, v: b.iter().map(|v| v.ln()).collect(), iterations: it, violation });
        }
        if a.iter().chain(&b).any(|v| !v.is_finite() || *v == 0.0) {
            break;
        }
    }
    Err(Error::Refused(format!("fixpoint not reached: violation {violation:e} after {it} iterations")))
}

/// Log-domain variant over an arbitrary log-kernel; `−∞` entries are outside the support.
pub fn sinkhorn_fixpoint_log(
    log_kernel: &[Vec<f64>],
    d_l: &[f64],
    d_r: &[f64],
    budget: &OracleBudget,
) -> Result<FixpointPlan> {
    let (l, r) = (d_l.len(), d_r.len());
    if l > 64 || r > 64 {
        return Err(Error::Refused(format!("{l}x{r} exceeds the 64x64 fixpoint limit")));
    }
    check_demands(d_l, "left")?;
    check_demands(d_r, "right")?;
    if log_kernel.len() != l || log_kernel.iter().any(|row| row.len() != r) {
        return Err(Error::Instance("kernel shape does not match demands".into()));
    }
    let lse = |vals: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = vals.collect();
        let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if mx == f64::NEG_INFINITY {
            mx
        } else {
            mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
        }
    };
    let mut u = vec![0.0; l];
    let mut v = vec![0.0; r];
    let tol = budget.tolerance.max(1e-13);
    let start = Instant::now();
    let mut violation = f64::INFINITY;
    let mut it = 0;
    while it < budget.max_iterations && start.elapsed() < budget.wall_time {
        it += 1;
        for j in 0..r {
            let s = lse(&mut (0..l).map(|i| u[i] + log_kernel[i][j]));
            if s == f64::NEG_INFINITY {
                return Err(Error::Instance(format!("column {j} has empty support")));
            }
            v[j] = d_r[j].ln() - s;
        }
        for i in 0..l {
            let s = lse(&mut (0..r).map(|j| log_kernel[i][j] + v[j]));
            if s == f64::NEG_INFINITY {
                return Err(Error::Instance(format!("row {i} has empty support")));
            }
            u[i] = d_l[i].ln() - s;
        }
        violation = (0..r)
            .map(|j| ((0..l).map(|i| (u[i] + log_kernel[i][j] + v[j]).exp()).sum::<f64>() - d_r[j]).abs())
            .sum();
        if violation <= tol {
            let plan = (0..l).map(|i| (0..r).map(|j| (u[i] + log_kernel[i][j] + v[j]).exp()).collect()).collect();
            return Ok(FixpointPlan { plan, u, v, iterations: it, violation });
        }
    }
    Err(Error::Refused(format!("fixpoint not reached: violation {violation:e} after {it} iterations")))
}

/// `⟨C, X⟩ + μ Σ X log X`, summed row by row.
pub fn transport_objective(cost: &[Vec<f64>], plan: &[Vec<f64>], mu: f64) -> f64 {
    let mut total = 0.0;
    for (crow, xrow) in cost.iter().zip(plan) {
        let mut row = 0.0;
        for (c, x) in crow.iter().zip(xrow) {
            row += c * x;
            if *x > 0.0 {
                row += mu * x * x.ln();
            }
        }
        total += row;
    }
    total
}
