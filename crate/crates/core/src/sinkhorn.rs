//! Entropically regularized optimal transport.
//!
//! Minimizes `⟨C, X⟩ + μ Σ X log X` over plans with marginals `d_L`, `d_R`, either by
//! classical log-domain Sinkhorn scaling followed by rounding, or by reduction to a
//! regularized box-simplex game solved with [`crate::bsgame`].

use serde::Serialize;

use crate::bsgame::{self, RegGame, SolveReport, SolverConfig};
use crate::error::{instance, Result};
use crate::numkit::{self, SparseMatrix};

/// A transport problem on a complete bipartite graph with dense costs.
#[derive(Debug, Clone)]
pub struct OTInstance {
    cost: Vec<Vec<f64>>,
    d_l: Vec<f64>,
    d_r: Vec<f64>,
    mu: f64,
}

impl OTInstance {
    pub fn new(cost: Vec<Vec<f64>>, d_l: Vec<f64>, d_r: Vec<f64>, mu: f64) -> Result<Self> {
        if d_l.is_empty() || d_r.is_empty() {
            return instance("both sides need at least one vertex");
        }
        if cost.len() != d_l.len() || cost.iter().any(|r| r.len() != d_r.len()) {
            return instance(format!("cost must be {}x{}", d_l.len(), d_r.len()));
        }
        if cost.iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
            return instance("costs must be finite and nonnegative");
        }
        for (d, side) in [(&d_l, "left"), (&d_r, "right")] {
            if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return instance(format!("{side} demands must be nonnegative"));
            }
            let s: f64 = d.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return instance(format!("{side} demands sum to {s}, expected 1"));
            }
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return instance("mu must be positive");
        }
        Ok(Self { cost, d_l, d_r, mu })
    }

    pub fn cost(&self) -> &[Vec<f64>] {
        &self.cost
    }
    pub fn d_l(&self) -> &[f64] {
        &self.d_l
    }
    pub fn d_r(&self) -> &[f64] {
        &self.d_r
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn left(&self) -> usize {
        self.d_l.len()
    }
    pub fn right(&self) -> usize {
        self.d_r.len()
    }
    /// Number of plan entries, `|L|·|R|`.
    pub fn m(&self) -> usize {
        self.left() * self.right()
    }
    pub fn cost_max(&self) -> f64 {
        self.cost.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Same costs and μ with new demands.
    pub fn with_demands(&self, d_l: Vec<f64>, d_r: Vec<f64>) -> Result<Self> {
        Self::new(self.cost.clone(), d_l, d_r, self.mu)
    }
}

/// A transport plan, optionally with the log scalings that generated it.
#[derive(Debug, Clone, Serialize)]
pub struct TransportPlan {
    pub x: Vec<Vec<f64>>,
    /// When present, `x_ij = exp(u_i − C_ij/μ + v_j)`.
    pub u: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.x.iter().map(|r| r.iter().sum()).collect()
    }
    pub fn col_sums(&self) -> Vec<f64> {
        col_sums(&self.x)
    }
}

fn col_sums(x: &[Vec<f64>]) -> Vec<f64> {
    let mut s = vec![0.0; x.first().map_or(0, |r| r.len())];
    for row in x {
        for (j, v) in row.iter().enumerate() {
            s[j] += v;
        }
    }
    s
}

/// `‖X1 − d_L‖₁ + ‖Xᵀ1 − d_R‖₁`.
pub fn marginal_violation(x: &[Vec<f64>], d_l: &[f64], d_r: &[f64]) -> f64 {
    let rows: f64 = x.iter().zip(d_l).map(|(r, d)| (r.iter().sum::<f64>() - d).abs()).sum();
    let cols: f64 = col_sums(x).iter().zip(d_r).map(|(s, d)| (s - d).abs()).sum();
    rows + cols
}

/// `⟨C, X⟩ + μ Σ X log X`.
pub fn sinkhorn_objective(inst: &OTInstance, plan: &TransportPlan) -> Result<f64> {
    if plan.x.len() != inst.left() || plan.x.iter().any(|r| r.len() != inst.right()) {
        return instance("plan shape does not match the instance");
    }
    if plan.x.iter().flatten().any(|v| *v < 0.0) {
        return instance("plan has a negative entry");
    }
    let flat: Vec<f64> = plan.x.iter().flatten().copied().collect();
    let total: f64 = flat.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return instance(format!("plan mass {total} is not 1"));
    }
    let lin: f64 = inst.cost.iter().flatten().zip(&flat).map(|(c, x)| c * x).sum();
    Ok(lin + inst.mu * numkit::entropy(&flat))
}

/// Log-domain Sinkhorn scaling on `exp(−C/μ)`, row update then column update.
///
/// Stops once the ℓ1 marginal violation is at most `delta`; column marginals are
/// exact on return because the column update runs last.
pub fn sinkhorn_iterate(inst: &OTInstance, delta: f64, max_iters: usize) -> Result<TransportPlan> {
    if !(delta > 0.0) {
        return instance("delta must be positive");
    }
    if inst.d_l.iter().chain(&inst.d_r).any(|v| *v <= 0.0) {
        return instance("demands must be strictly positive; pad first");
    }
    let (l, r) = (inst.left(), inst.right());
    let logk: Vec<Vec<f64>> = inst.cost.iter().map(|row| row.iter().map(|c| -c / inst.mu).collect()).collect();
    let log_dl: Vec<f64> = inst.d_l.iter().map(|v| v.ln()).collect();
    let log_dr: Vec<f64> = inst.d_r.iter().map(|v| v.ln()).collect();
    let mut u = vec![0.0; l];
    let mut v = vec![0.0; r];
    let mut buf = vec![0.0; l.max(r)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        for i in 0..l {
            for j in 0..r {
                buf[j] = logk[i][j] + v[j];
            }
            u[i] = log_dl[i] - numkit::log_sum_exp(&buf[..r]);
        }
        for j in 0..r {
            for i in 0..l {
                buf[i] = logk[i][j] + u[i];
            }
            v[j] = log_dr[j] - numkit::log_sum_exp(&buf[..l]);
        }
        let viol: f64 = (0..l)
            .map(|i| ((0..r).map(|j| (u[i] + logk[i][j] + v[j]).exp()).sum::<f64>() - inst.d_l[i]).abs())
            .sum();
        if viol <= delta {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("sinkhorn_iterate stopped after {iterations} iterations without reaching {delta:e}");
    }
    let x = (0..l).map(|i| (0..r).map(|j| (u[i] + logk[i][j] + v[j]).exp()).collect()).collect();
    Ok(TransportPlan { x, u: Some(u), v: Some(v), iterations, converged })
}

/// Repairs a nonnegative plan to exact marginals.
///
/// Rows, then columns, are scaled down to their demands and the deficit is
/// restored by a rank-one correction; moves at most twice the marginal violation in ℓ1.
pub fn ot_round(x: &[Vec<f64>], d_l: &[f64], d_r: &[f64]) -> Result<Vec<Vec<f64>>> {
    if x.len() != d_l.len() || x.iter().any(|r| r.len() != d_r.len()) {
        return instance("plan shape does not match demands");
    }
    if x.iter().flatten().any(|v| *v < 0.0 || !v.is_finite()) {
        return instance("plan must be nonnegative");
    }
    let mut out: Vec<Vec<f64>> = x.to_vec();
    for (row, d) in out.iter_mut().zip(d_l) {
        let s: f64 = row.iter().sum();
        if s > *d {
            let f = d / s;
            row.iter_mut().for_each(|v| *v *= f);
        }
    }
    let cs = col_sums(&out);
    for row in out.iter_mut() {
        for j in 0..d_r.len() {
            if cs[j] > d_r[j] {
                row[j] *= d_r[j] / cs[j];
            }
        }
    }
    let err_l: Vec<f64> = out.iter().zip(d_l).map(|(r, d)| (d - r.iter().sum::<f64>()).max(0.0)).collect();
    let err_r: Vec<f64> = col_sums(&out).iter().zip(d_r).map(|(s, d)| (d - s).max(0.0)).collect();
    let norm: f64 = err_l.iter().sum();
    if norm > 0.0 {
        for (i, row) in out.iter_mut().enumerate() {
            for j in 0..d_r.len() {
                row[j] += err_l[i] * err_r[j] / norm;
            }
        }
    }
    Ok(out)
}

/// Default demand floor `max(m^{-20}, 1e-12)`.
pub fn default_demand_floor(m: usize) -> f64 {
    (m as f64).powi(-20).max(1e-12)
}

/// `max(d, floor)` renormalized.
pub fn pad_demands(d: &[f64], floor: f64) -> Vec<f64> {
    bsgame::pad_simplex(d, floor)
}

/// The box-simplex game equivalent to an OT instance.
#[derive(Debug, Clone)]
pub struct OtReduction {
    pub game: RegGame,
    /// `C = 2(‖c‖_∞ + 33μ log m)`.
    pub big_c: f64,
}

/// Penalty scale `2(‖c‖_∞ + 33 μ log m)`.
pub fn penalty_scale(cost_max: f64, mu: f64, m: usize) -> f64 {
    2.0 * (cost_max + 33.0 * mu * (m as f64).ln())
}

/// Builds the game with `A = ¼[B, −B]`, `b = ¼(d, −d)`, costs `c/(4C)`, entropy `μ/(4C)`.
///
/// Plan entry `(i, j)` is simplex coordinate `i·|R| + j`; box coordinates are the
/// vertices `(L, R)` for the upper constraint followed by the same vertices for the lower one.
/// `eps_reg` sets the quadratic strength of the returned game.
pub fn reduce_to_bsgame(inst: &OTInstance, eps_reg: f64) -> Result<OtReduction> {
    let (l, r) = (inst.left(), inst.right());
    let n = l + r;
    let big_c = penalty_scale(inst.cost_max(), inst.mu, inst.m());
    let big_c = if big_c > 0.0 { big_c } else { 1.0 };
    let mut t = Vec::with_capacity(4 * inst.m());
    for i in 0..l {
        for j in 0..r {
            let e = i * r + j;
            t.push((e, i, 0.25));
            t.push((e, l + j, 0.25));
            t.push((e, n + i, -0.25));
            t.push((e, n + l + j, -0.25));
        }
    }
    let a = SparseMatrix::from_triplets(inst.m(), 2 * n, &t)?;
    let d: Vec<f64> = inst.d_l.iter().chain(&inst.d_r).copied().collect();
    let b: Vec<f64> = d.iter().map(|v| 0.25 * v).chain(d.iter().map(|v| -0.25 * v)).collect();
    let c: Vec<f64> = inst.cost.iter().flatten().map(|v| v / (4.0 * big_c)).collect();
    let game = RegGame::new(a, b, c, inst.mu / (4.0 * big_c), eps_reg)?;
    Ok(OtReduction { game, big_c })
}

/// `¼‖Bᵀx − d‖₁` plus the scaled linear and entropy terms: the game value after maximizing out `y`
/// without the quadratic term.
pub fn penalized_objective(inst: &OTInstance, big_c: f64, x: &[f64]) -> f64 {
    let r = inst.right();
    let rows: Vec<Vec<f64>> = x.chunks(r).map(|c| c.to_vec()).collect();
    let viol = marginal_violation(&rows, &inst.d_l, &inst.d_r);
    let lin: f64 = inst.cost.iter().flatten().zip(x).map(|(c, v)| c * v).sum();
    (lin + inst.mu * numkit::entropy(x)) / (4.0 * big_c) + 0.25 * viol
}

/// Telemetry of [`solve_via_bsgame`].
#[derive(Debug, Clone, Serialize)]
pub struct BsgameOtReport {
    pub big_c: f64,
    pub game_accuracy: f64,
    pub pre_round_violation: f64,
    pub solve: SolveReport,
}

/// ε-approximate plan through the box-simplex reduction.
///
/// The reduced game is solved to `ε/(8C)` with the half-regularized solver and the
/// result is rounded to the exact demands.
pub fn solve_via_bsgame(inst: &OTInstance, epsilon: f64, cfg: &SolverConfig) -> Result<(TransportPlan, BsgameOtReport)> {
    if !(epsilon > 0.0) {
        return instance("epsilon must be positive");
    }
    if inst.m() == 1 {
        let plan = TransportPlan { x: vec![vec![1.0]], u: None, v: None, iterations: 0, converged: true };
        let red = reduce_to_bsgame(inst, 1.0)?;
        let (_, rep) = bsgame::solve_with(&red.game, 1.0, cfg)?;
        let report = BsgameOtReport { big_c: red.big_c, game_accuracy: 0.0, pre_round_violation: 0.0, solve: rep };
        return Ok((plan, report));
    }
    let big_c = penalty_scale(inst.cost_max(), inst.mu, inst.m());
    let accuracy = epsilon / (8.0 * big_c);
    let red = reduce_to_bsgame(inst, accuracy)?;
    if cfg.mode == bsgame::Mode::Theory && inst.mu < 36.0 * epsilon {
        return instance(format!("theory mode needs mu ≥ 36·epsilon (mu = {}, epsilon = {epsilon})", inst.mu));
    }
    let (z, report) = bsgame::solve_with(&red.game, accuracy / 2.0, cfg)?;
    let r = inst.right();
    let rows: Vec<Vec<f64>> = z.x.chunks(r).map(|c| c.to_vec()).collect();
    let pre = marginal_violation(&rows, &inst.d_l, &inst.d_r);
    let x = ot_round(&rows, &inst.d_l, &inst.d_r)?;
    let plan = TransportPlan { x, u: None, v: None, iterations: report.outer_iterations, converged: report.certified };
    Ok((plan, BsgameOtReport { big_c: red.big_c, game_accuracy: accuracy, pre_round_violation: pre, solve: report }))
}

/// Marginal tolerance `ε/(10‖c‖_∞ + 330 μ log m)` for the unaccelerated method.
pub fn unaccel_tolerance(cost_max: f64, mu: f64, m: usize, epsilon: f64) -> f64 {
    epsilon / (10.0 * cost_max + 330.0 * mu * (m as f64).ln())
}

/// Telemetry of [`solve_unaccel`].
#[derive(Debug, Clone, Serialize)]
pub struct UnaccelReport {
    pub tolerance: f64,
    pub demand_floor: f64,
    pub iterations: usize,
    pub converged: bool,
    pub pre_round_violation: f64,
}

/// ε-approximate plan by Sinkhorn scaling on padded demands followed by rounding.
pub fn solve_unaccel(
    inst: &OTInstance,
    epsilon: f64,
    floor: Option<f64>,
    max_iters: usize,
) -> Result<(TransportPlan, UnaccelReport)> {
    if !(epsilon > 0.0) {
        return instance("epsilon must be positive");
    }
    let m = inst.m();
    let floor = floor.unwrap_or_else(|| default_demand_floor(m));
    let tol = if m > 1 { unaccel_tolerance(inst.cost_max(), inst.mu, m, epsilon) } else { epsilon };
    let padded = inst.with_demands(pad_demands(&inst.d_l, floor), pad_demands(&inst.d_r, floor))?;
    let it = sinkhorn_iterate(&padded, tol, max_iters)?;
    let pre = marginal_violation(&it.x, &inst.d_l, &inst.d_r);
    let x = ot_round(&it.x, &inst.d_l, &inst.d_r)?;
    let report = UnaccelReport {
        tolerance: tol,
        demand_floor: floor,
        iterations: it.iterations,
        converged: it.converged,
        pre_round_violation: pre,
    };
    Ok((TransportPlan { x, u: None, v: None, iterations: it.iterations, converged: it.converged }, report))
}

/// Sparse nonnegative kernel given by its logarithms on a support.
#[derive(Debug, Clone)]
pub struct LogKernel {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
    by_row: Vec<Vec<usize>>,
    by_col: Vec<Vec<usize>>,
}

impl LogKernel {
    pub fn new(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut by_row = vec![Vec::new(); rows];
        let mut by_col = vec![Vec::new(); cols];
        for (k, &(i, j, w)) in entries.iter().enumerate() {
            if i >= rows || j >= cols || !w.is_finite() {
                return instance(format!("kernel entry ({i},{j}) invalid"));
            }
            by_row[i].push(k);
            by_col[j].push(k);
        }
        if let Some(i) = by_row.iter().position(|r| r.is_empty()) {
            return instance(format!("kernel row {i} is empty"));
        }
        if let Some(j) = by_col.iter().position(|c| c.is_empty()) {
            return instance(format!("kernel column {j} is empty"));
        }
        Ok(Self { rows, cols, entries, by_row, by_col })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Same support with every log-entry multiplied by `f`.
    pub fn scaled(&self, f: f64) -> Self {
        let entries = self.entries.iter().map(|&(i, j, w)| (i, j, w * f)).collect();
        Self { entries, ..self.clone() }
    }

    /// Plan entries `exp(u_i + logK_ij + v_j)` in entry order.
    pub fn plan(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|&(i, j, w)| (u[i] + w + v[j]).exp()).collect()
    }
}

/// Output of [`scale_log_kernel`].
#[derive(Debug, Clone)]
pub struct Scaling {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations: usize,
    pub violation: f64,
    pub converged: bool,
}

/// Stable `log Σ exp` over a short slice, one pass with a running maximum.
fn lse_pairs(idx: &[usize], w: &[f64], pot: &[f64]) -> f64 {
    let mut mx = f64::NEG_INFINITY;
    let mut s = 0.0;
    for (&j, &wk) in idx.iter().zip(w) {
        let t = wk + pot[j];
        if t > mx {
            s = s * (mx - t).exp() + 1.0;
            mx = t;
        } else {
            s += (t - mx).exp();
        }
    }
    mx + s.ln()
}

/// Compressed adjacency of one side: `ptr`, neighbour index and log-entry per slot.
struct Adj {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    w: Vec<f64>,
}

impl Adj {
    fn build(lists: &[Vec<usize>], e: &[(usize, usize, f64)], row_side: bool) -> Self {
        let mut ptr = vec![0];
        let mut idx = Vec::with_capacity(e.len());
        let mut w = Vec::with_capacity(e.len());
        for l in lists {
            for &q in l {
                idx.push(if row_side { e[q].1 } else { e[q].0 });
                w.push(e[q].2);
            }
            ptr.push(idx.len());
        }
        Self { ptr, idx, w }
    }

    fn lse(&self, i: usize, pot: &[f64]) -> f64 {
        let (a, b) = (self.ptr[i], self.ptr[i + 1]);
        lse_pairs(&self.idx[a..b], &self.w[a..b], pot)
    }
}

/// Log-domain scaling of a sparse kernel to row sums `d_rows` and column sums `d_cols`.
///
/// Row update then column update; stops when the row ℓ1 violation is at most `tol`.
/// The violation is measured every few sweeps. Warm-start potentials are used when given.
pub fn scale_log_kernel(
    k: &LogKernel,
    d_rows: &[f64],
    d_cols: &[f64],
    tol: f64,
    max_iters: usize,
    warm: Option<(&[f64], &[f64])>,
) -> Result<Scaling> {
    const CHECK_EVERY: usize = 8;
    if d_rows.len() != k.rows || d_cols.len() != k.cols {
        return instance("demand dimensions do not match the kernel");
    }
    if d_rows.iter().chain(d_cols).any(|v| !(*v > 0.0)) {
        return instance("demands must be strictly positive");
    }
    let (mut u, mut v) = match warm {
        Some((u0, v0)) if u0.len() == k.rows && v0.len() == k.cols => (u0.to_vec(), v0.to_vec()),
        _ => (vec![0.0; k.rows], vec![0.0; k.cols]),
    };
    let log_r: Vec<f64> = d_rows.iter().map(|d| d.ln()).collect();
    let log_c: Vec<f64> = d_cols.iter().map(|d| d.ln()).collect();
    let rows = Adj::build(&k.by_row, &k.entries, true);
    let cols = Adj::build(&k.by_col, &k.entries, false);
    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    while iterations < max_iters {
        iterations += 1;
        for i in 0..k.rows {
            u[i] = log_r[i] - rows.lse(i, &v);
        }
        for j in 0..k.cols {
            v[j] = log_c[j] - cols.lse(j, &u);
        }
        if iterations % CHECK_EVERY == 0 || iterations == max_iters || iterations == 1 {
            violation = (0..k.rows).map(|i| ((u[i] + rows.lse(i, &v)).exp() - d_rows[i]).abs()).sum();
            if violation <= tol {
                return Ok(Scaling { u, v, iterations, violation, converged: true });
            }
        }
    }
    Ok(Scaling { u, v, iterations, violation, converged: false })
}
