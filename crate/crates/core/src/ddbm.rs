//! Decremental bipartite matching.
//!
//! Maintains a feasible fractional matching whose value stays within a `(1 − ε)`
//! factor of the maximum matching while edges are deleted. Each phase fixes a greedy
//! estimate `M`, solves a regularized matching objective, and re-solves only when
//! the deleted edges carry more than an `ε/8` fraction of the maintained mass.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bsgame::{self, PdPoint, RegGame, SolverConfig};
use crate::error::{instance, Error, Result};
use crate::numkit::SparseMatrix;
use crate::oracle;
use crate::sinkhorn::{self, LogKernel};

/// Bipartite graph with per-edge deletion flags.
#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    n_left: usize,
    n_right: usize,
    edges: Vec<(usize, usize)>,
    alive: Vec<bool>,
    alive_count: usize,
}

impl BipartiteGraph {
    pub fn new(n_left: usize, n_right: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for &(u, v) in &edges {
            if u >= n_left || v >= n_right {
                return instance(format!("edge ({u},{v}) out of range for {n_left}x{n_right}"));
            }
            if !seen.insert((u, v)) {
                return instance(format!("duplicate edge ({u},{v})"));
            }
        }
        let m = edges.len();
        Ok(Self { n_left, n_right, edges, alive: vec![true; m], alive_count: m })
    }

    pub fn n_left(&self) -> usize {
        self.n_left
    }
    pub fn n_right(&self) -> usize {
        self.n_right
    }
    /// Number of edges ever present.
    pub fn m(&self) -> usize {
        self.edges.len()
    }
    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
    pub fn is_alive(&self, e: usize) -> bool {
        self.alive[e]
    }
    pub fn alive_count(&self) -> usize {
        self.alive_count
    }
    pub fn alive_edges(&self) -> Vec<usize> {
        (0..self.m()).filter(|&e| self.alive[e]).collect()
    }

    pub fn delete(&mut self, e: usize) -> Result<()> {
        if e >= self.m() {
            return Err(Error::Stream(format!("edge {e} does not exist")));
        }
        if !self.alive[e] {
            return Err(Error::Stream(format!("edge {e} already deleted")));
        }
        self.alive[e] = false;
        self.alive_count -= 1;
        Ok(())
    }

    /// Exact maximum matching size over alive edges.
    pub fn mcm(&self) -> usize {
        let alive: Vec<(usize, usize)> = self.alive_edges().into_iter().map(|e| self.edges[e]).collect();
        oracle::hopcroft_karp(self.n_left, self.n_right, &alive).expect("edges are in range")
    }

    /// Vertex loads `Bᵀℓ` of per-edge weights; left vertices first.
    pub fn loads(&self, ell: &[f64]) -> Vec<f64> {
        let mut load = vec![0.0; self.n_left + self.n_right];
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            load[u] += ell[e];
            load[self.n_left + v] += ell[e];
        }
        load
    }
}

/// Maximal matching from one scan over the alive edges in index order.
pub fn greedy_matching(g: &BipartiteGraph) -> (usize, Vec<usize>) {
    let mut used_l = vec![false; g.n_left];
    let mut used_r = vec![false; g.n_right];
    let mut picked = Vec::new();
    for e in 0..g.m() {
        if !g.alive[e] {
            continue;
        }
        let (u, v) = g.edges[e];
        if !used_l[u] && !used_r[v] {
            used_l[u] = true;
            used_r[v] = true;
            picked.push(e);
        }
    }
    (picked.len(), picked)
}

/// Scales edge weights down so no vertex is overloaded.
///
/// Vertex `v` gets factor `1/max(1, (Bᵀℓ)_v)` and each edge takes the smaller factor of
/// its endpoints. The result is feasible, entrywise below `ℓ`, and loses at most the
/// total overflow in ℓ1.
pub fn remove_overflow(g: &BipartiteGraph, ell: &[f64]) -> Result<Vec<f64>> {
    if ell.len() != g.m() {
        return instance("weight vector length does not match the edge count");
    }
    if ell.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return instance("weights must be nonnegative");
    }
    let load = g.loads(ell);
    let factor: Vec<f64> = load.iter().map(|&s| if s > 1.0 { 1.0 / s } else { 1.0 }).collect();
    Ok(g.edges
        .iter()
        .zip(ell)
        .map(|(&(u, v), &w)| {
            let f = factor[u].min(factor[g.n_left + v]);
            if f < 1.0 {
                w * f
            } else {
                w
            }
        })
        .collect())
}

/// Which regularized matching objective to maintain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CroKind {
    /// Entropy and quadratic regularized box-simplex game, solved by mirror prox.
    BoxSimplex,
    /// Entropic transport on an extended graph, solved by matrix scaling.
    Sinkhorn,
}

impl std::str::FromStr for CroKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bs" | "box-simplex" => Ok(CroKind::BoxSimplex),
            "sinkhorn" => Ok(CroKind::Sinkhorn),
            other => Err(format!("unknown kind '{other}' (expected bs or sinkhorn)")),
        }
    }
}

/// Construction and solver knobs.
#[derive(Debug, Clone)]
pub struct CroConfig {
    pub kind: CroKind,
    /// Constant in `γ = const·ε·M / log m`.
    pub reg_const: f64,
    /// Cap the quadratic weight at `γ^x/288` so that the solver's entropy precondition holds.
    pub quad_cap: bool,
    /// Solver settings for the box-simplex kind.
    pub solver: SolverConfig,
    /// Lower limit on the box-simplex gap target.
    pub gap_floor: f64,
    /// Row violation target for the scaling kind; default `ε·M / (32·|R|)`.
    pub scaling_tol: Option<f64>,
    pub scaling_max_iters: usize,
    /// Sweeps allowed from warm potentials before falling back to annealing.
    pub warm_budget: usize,
}

impl Default for CroConfig {
    fn default() -> Self {
        Self {
            kind: CroKind::Sinkhorn,
            reg_const: 1.0 / 256.0,
            quad_cap: true,
            solver: SolverConfig::new(bsgame::Mode::Practical),
            gap_floor: 1e-13,
            scaling_tol: None,
            scaling_max_iters: 2_000_000,
            warm_budget: 2_000,
        }
    }
}

/// `γ^x = const·ε·M / log(max(m, 2))`.
pub fn entropy_weight(reg_const: f64, epsilon: f64, m_approx: f64, m_edges: usize) -> f64 {
    reg_const * epsilon * m_approx / (m_edges.max(2) as f64).ln()
}

#[derive(Debug, Clone)]
enum CroBody {
    Bs {
        game: RegGame,
    },
    Sinkhorn {
        kernel: LogKernel,
        d_rows: Vec<f64>,
        d_cols: Vec<f64>,
        /// Kernel entry index of each objective edge.
        entry: Vec<usize>,
    },
}

/// One member of the regularized matching family for a fixed edge set.
#[derive(Debug, Clone)]
pub struct CroInstance {
    pub kind: CroKind,
    pub m_approx: f64,
    pub epsilon: f64,
    pub gamma_x: f64,
    /// Quadratic weight (box-simplex kind only).
    pub gamma_y: f64,
    /// Graph edge ids of the objective coordinates.
    pub edges: Vec<usize>,
    /// Factor turning objective coordinates into a matching (`8M` or `2|R|`).
    pub scale: f64,
    body: CroBody,
}

impl CroInstance {
    /// Embedded game of the box-simplex kind: simplex coordinates are the edges then `ξ`.
    pub fn game(&self) -> Option<&RegGame> {
        match &self.body {
            CroBody::Bs { game } => Some(game),
            CroBody::Sinkhorn { .. } => None,
        }
    }

    /// Kernel, demands and edge entry map of the scaling kind.
    pub fn scaling_problem(&self) -> Option<(&LogKernel, &[f64], &[f64], &[usize])> {
        match &self.body {
            CroBody::Sinkhorn { kernel, d_rows, d_cols, entry } => Some((kernel, d_rows, d_cols, entry)),
            CroBody::Bs { .. } => None,
        }
    }

    /// Objective value in matching units: `−8M·1ᵀx + max_y(…)` or the transport objective.
    ///
    /// For the box-simplex kind `x` holds edge coordinates and `ξ = 1 − Σx`.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        match &self.body {
            CroBody::Bs { game } => {
                if x.len() != self.edges.len() {
                    return instance("expected one coordinate per edge");
                }
                let mut full = x.to_vec();
                full.push((1.0 - x.iter().sum::<f64>()).max(0.0));
                Ok(16.0 * self.m_approx * bsgame::primal_value(game, &full))
            }
            CroBody::Sinkhorn { kernel, .. } => {
                if x.len() != kernel.entries().len() {
                    return instance("expected one coordinate per kernel entry");
                }
                let lin: f64 = self.edge_entries().iter().map(|&q| -self.scale * x[q]).sum();
                Ok(lin + self.gamma_x * crate::numkit::entropy(x))
            }
        }
    }

    fn edge_entries(&self) -> &[usize] {
        match &self.body {
            CroBody::Sinkhorn { entry, .. } => entry,
            CroBody::Bs { .. } => &[],
        }
    }
}

fn check_build(alive: &[usize], m_approx: f64, epsilon: f64) -> Result<()> {
    if alive.is_empty() {
        return instance("no alive edges: the matching precondition fails");
    }
    if !(m_approx > 0.0) {
        return instance("M must be positive");
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return instance("epsilon must lie in (0, 1)");
    }
    Ok(())
}

/// Box-simplex member scaled by `1/(16M)`: `A = ½B`, `b = 1/(16M)`, `c = −½` on edges.
///
/// Vertices without alive edges are left out of the dual; their box variables are
/// zero at every optimum.
pub fn build_cro_bs(g: &BipartiteGraph, alive: &[usize], m_approx: f64, epsilon: f64, cfg: &CroConfig) -> Result<CroInstance> {
    check_build(alive, m_approx, epsilon)?;
    let gamma_x = entropy_weight(cfg.reg_const, epsilon, m_approx, g.m());
    let mut gamma_y = cfg.reg_const * epsilon * m_approx;
    if cfg.quad_cap {
        gamma_y = gamma_y.min(gamma_x / 288.0);
    }
    let mut col = vec![usize::MAX; g.n_left + g.n_right];
    let mut n = 0;
    let mut t = Vec::with_capacity(2 * alive.len());
    for (k, &e) in alive.iter().enumerate() {
        let (u, v) = g.edges[e];
        for w in [u, g.n_left + v] {
            if col[w] == usize::MAX {
                col[w] = n;
                n += 1;
            }
            t.push((k, col[w], 0.5));
        }
    }
    let m = alive.len() + 1;
    let a = SparseMatrix::from_triplets(m, n, &t)?;
    let b = vec![1.0 / (16.0 * m_approx); n];
    let mut c = vec![-0.5; m];
    c[m - 1] = 0.0;
    let game = RegGame::new(a, b, c, gamma_x / (16.0 * m_approx), gamma_y / (4.0 * m_approx))?;
    Ok(CroInstance {
        kind: CroKind::BoxSimplex,
        m_approx,
        epsilon,
        gamma_x,
        gamma_y,
        edges: alive.to_vec(),
        scale: 8.0 * m_approx,
        body: CroBody::Bs { game },
    })
}

/// Vertex layout of the extended transport graph for one phase.
#[derive(Debug, Clone)]
pub struct ExtendedLayout {
    /// Whether the graph sides were exchanged so that the row side is the smaller one.
    pub swapped: bool,
    /// Original vertices on the small side (`L`) and large side (`R`), anchors included.
    pub small: usize,
    pub large: usize,
}

impl ExtendedLayout {
    /// Anchors are isolated vertices; one is added on a side that has none.
    pub fn new(g: &BipartiteGraph) -> Self {
        let mut deg_l = vec![0usize; g.n_left];
        let mut deg_r = vec![0usize; g.n_right];
        for e in g.alive_edges() {
            let (u, v) = g.edges[e];
            deg_l[u] += 1;
            deg_r[v] += 1;
        }
        let nl = g.n_left + usize::from(!deg_l.contains(&0));
        let nr = g.n_right + usize::from(!deg_r.contains(&0));
        let swapped = nl > nr;
        let (small, large) = if swapped { (nr, nl) } else { (nl, nr) };
        Self { swapped, small, large }
    }

    /// Rows: small side, padding `L₀` up to `|R|`, then the row dummy. Columns: large side then the column dummy.
    pub fn rows(&self) -> usize {
        self.large + 1
    }
    pub fn cols(&self) -> usize {
        self.large + 1
    }
}

/// Transport member on the extended graph.
///
/// Rows are `L ∪ L₀ ∪ {v_L}` with demands `1/(2|R|)` and `½` for the dummy; columns are
/// `R ∪ {v_R}` likewise. The log-kernel is `2|R|/γ` on graph edges and `0` on the
/// dummy edges.
pub fn build_cro_sinkhorn(
    g: &BipartiteGraph,
    alive: &[usize],
    m_approx: f64,
    epsilon: f64,
    layout: &ExtendedLayout,
    cfg: &CroConfig,
) -> Result<CroInstance> {
    check_build(alive, m_approx, epsilon)?;
    let gamma = entropy_weight(cfg.reg_const, epsilon, m_approx, g.m());
    let r = layout.large;
    let two_r = 2.0 * r as f64;
    let weight = two_r / gamma;
    let (dum_row, dum_col) = (r, r);
    let mut entries = Vec::with_capacity(alive.len() + 2 * r + 1);
    let mut entry = Vec::with_capacity(alive.len());
    for &e in alive {
        let (u, v) = g.edges[e];
        let (i, j) = if layout.swapped { (v, u) } else { (u, v) };
        entry.push(entries.len());
        entries.push((i, j, weight));
    }
    for i in 0..r {
        entries.push((i, dum_col, 0.0));
    }
    for j in 0..r {
        entries.push((dum_row, j, 0.0));
    }
    entries.push((dum_row, dum_col, 0.0));
    let kernel = LogKernel::new(r + 1, r + 1, entries)?;
    let mut d = vec![1.0 / two_r; r + 1];
    d[r] = 0.5;
    Ok(CroInstance {
        kind: CroKind::Sinkhorn,
        m_approx,
        epsilon,
        gamma_x: gamma,
        gamma_y: 0.0,
        edges: alive.to_vec(),
        scale: two_r,
        body: CroBody::Sinkhorn { kernel, d_rows: d.clone(), d_cols: d, entry },
    })
}

/// Warm-start data carried between solves of one phase.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    potentials: Option<(Vec<f64>, Vec<f64>)>,
    /// Previous box-simplex point keyed by graph edge id.
    point: Option<(Vec<f64>, Vec<f64>)>,
}

/// Output of [`canonical_solve`], indexed like `cro.edges`.
#[derive(Debug, Clone)]
pub struct CanonicalSolution {
    pub x_hat: Vec<f64>,
    pub x_tilde: Vec<f64>,
    pub certified: bool,
    pub iterations: usize,
    /// Full plan over all kernel entries (scaling kind).
    pub plan: Option<Vec<f64>>,
}

/// Scales a kernel, first from warm potentials with a small budget, otherwise by
/// annealing the log-kernel from a flat version up to the full one in factors of 4.
fn anneal_scaling(
    kernel: &LogKernel,
    d_rows: &[f64],
    d_cols: &[f64],
    tol: f64,
    cfg: &CroConfig,
    warm: Option<(Vec<f64>, Vec<f64>)>,
) -> Result<(Vec<f64>, Vec<f64>, bool, usize)> {
    let mut iterations = 0;
    if let Some((u0, v0)) = warm {
        let budget = cfg.warm_budget.min(cfg.scaling_max_iters);
        let s = sinkhorn::scale_log_kernel(kernel, d_rows, d_cols, tol, budget, Some((&u0, &v0)))?;
        iterations += s.iterations;
        if s.converged {
            return Ok((s.u, s.v, true, iterations));
        }
    }
    let full = kernel.entries().iter().map(|e| e.2).fold(0.0, f64::max);
    let mut stages = 0;
    let mut lambda = full;
    while lambda > 8.0 {
        lambda /= 4.0;
        stages += 1;
    }
    let mut pot: Option<(Vec<f64>, Vec<f64>)> = None;
    for s in (1..=stages).rev() {
        let k = kernel.scaled(0.25f64.powi(s));
        let w = pot.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice()));
        let r = sinkhorn::scale_log_kernel(&k, d_rows, d_cols, tol.max(1e-3), cfg.scaling_max_iters, w)?;
        iterations += r.iterations;
        pot = Some((r.u.iter().map(|x| 4.0 * x).collect(), r.v.iter().map(|x| 4.0 * x).collect()));
    }
    let w = pot.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice()));
    let r = sinkhorn::scale_log_kernel(kernel, d_rows, d_cols, tol, cfg.scaling_max_iters, w)?;
    Ok((r.u, r.v, r.converged, iterations + r.iterations))
}

/// Solves a member to high accuracy and rounds it to a feasible matching with `x̃ ≤ x̂`.
pub fn canonical_solve(
    g: &BipartiteGraph,
    cro: &CroInstance,
    cfg: &CroConfig,
    warm: &mut WarmStart,
) -> Result<CanonicalSolution> {
    let (x_hat, certified, iterations, plan) = match &cro.body {
        CroBody::Bs { game } => {
            let sigma = (0.5 * game.mu() * (cro.epsilon / 1100.0).powi(2)).max(cfg.gap_floor);
            let mut scfg = cfg.solver.clone();
            if let Some((xs, ys)) = &warm.point {
                let mut x: Vec<f64> = cro.edges.iter().map(|&e| xs[e]).collect();
                let s: f64 = x.iter().sum();
                x.push((1.0 - s).max(1e-12));
                let t: f64 = x.iter().sum();
                x.iter_mut().for_each(|v| *v /= t);
                let y = if ys.len() == game.n() { ys.clone() } else { vec![0.0; game.n()] };
                scfg.warm_start = Some(PdPoint::new(x, y));
            }
            let (z, rep) = bsgame::solve_with(game, sigma, &scfg)?;
            let mut xs = vec![0.0; g.m()];
            for (k, &e) in cro.edges.iter().enumerate() {
                xs[e] = z.x[k];
            }
            warm.point = Some((xs, z.y.clone()));
            (z.x[..cro.edges.len()].to_vec(), rep.certified, rep.outer_iterations, None)
        }
        CroBody::Sinkhorn { kernel, d_rows, d_cols, entry } => {
            let two_r = cro.scale;
            let tol = cfg.scaling_tol.unwrap_or(cro.epsilon * cro.m_approx / (16.0 * two_r));
            let (u, v, converged, iterations) =
                anneal_scaling(kernel, d_rows, d_cols, tol, cfg, warm.potentials.take())?;
            if !converged {
                log::warn!("matrix scaling stopped before reaching {tol:e}");
            }
            let p = kernel.plan(&u, &v);
            warm.potentials = Some((u, v));
            (entry.iter().map(|&q| p[q]).collect::<Vec<f64>>(), converged, iterations, Some(p))
        }
    };
    let mut ell = vec![0.0; g.m()];
    for (k, &e) in cro.edges.iter().enumerate() {
        ell[e] = cro.scale * x_hat[k];
    }
    let rounded = remove_overflow(g, &ell)?;
    let x_tilde = cro.edges.iter().map(|&e| rounded[e] / cro.scale).collect();
    Ok(CanonicalSolution { x_hat, x_tilde, certified, iterations, plan })
}

/// Maintained fractional matching: `scale·x_tilde` on alive edges.
#[derive(Debug, Clone)]
pub struct MatchingState {
    /// Per graph edge.
    pub x_tilde: Vec<f64>,
    pub scale: f64,
    pub m_approx: usize,
    pub m_est: usize,
    pub e_del: Vec<usize>,
    del_mass: f64,
    total_mass: f64,
}

impl MatchingState {
    /// Current fractional matching value over alive edges.
    pub fn value(&self, g: &BipartiteGraph) -> f64 {
        self.scale * (0..g.m()).filter(|&e| g.is_alive(e)).map(|e| self.x_tilde[e]).sum::<f64>() + 0.0
    }

    /// Largest vertex load of the maintained matching on alive edges.
    pub fn max_load(&self, g: &BipartiteGraph) -> f64 {
        let ell: Vec<f64> =
            (0..g.m()).map(|e| if g.is_alive(e) { self.scale * self.x_tilde[e] } else { 0.0 }).collect();
        g.loads(&ell).into_iter().fold(0.0, f64::max)
    }
}

/// Chooses the next edge to delete.
pub trait Adversary {
    /// `None` ends the stream.
    fn next(&mut self, g: &BipartiteGraph, x_tilde: &[f64]) -> Option<usize>;
}

/// Deletes the alive edge of largest current weight, lowest index on ties.
#[derive(Debug, Default)]
pub struct MaxWeight;

impl Adversary for MaxWeight {
    fn next(&mut self, g: &BipartiteGraph, x: &[f64]) -> Option<usize> {
        let mut best: Option<usize> = None;
        for e in 0..g.m() {
            if g.is_alive(e) && best.is_none_or(|b| x[e] > x[b]) {
                best = Some(e);
            }
        }
        best
    }
}

/// Deletes a uniformly random alive edge from a seeded generator.
#[derive(Debug)]
pub struct RandomOrder {
    rng: ChaCha8Rng,
}

impl RandomOrder {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Adversary for RandomOrder {
    fn next(&mut self, g: &BipartiteGraph, _: &[f64]) -> Option<usize> {
        let alive = g.alive_edges();
        if alive.is_empty() {
            None
        } else {
            Some(alive[self.rng.gen_range(0..alive.len())])
        }
    }
}

/// Replays a fixed list.
#[derive(Debug)]
pub struct FixedOrder {
    list: Vec<usize>,
    pos: usize,
}

impl FixedOrder {
    pub fn new(list: Vec<usize>) -> Self {
        Self { list, pos: 0 }
    }
}

impl Adversary for FixedOrder {
    fn next(&mut self, _: &BipartiteGraph, _: &[f64]) -> Option<usize> {
        let e = self.list.get(self.pos).copied();
        self.pos += 1;
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Deletion,
    Recompute,
    PhaseRestart,
    Terminate,
}

/// One line of the run log.
#[derive(Debug, Clone, Serialize)]
pub struct Event {
    pub event: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge: Option<usize>,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcm_oracle: Option<usize>,
    pub recompute_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ns: Option<u128>,
}

/// Summary of one phase.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseRecord {
    pub m_approx: usize,
    pub recomputes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcm_start: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcm_end: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunLog {
    pub events: Vec<Event>,
    pub phases: Vec<PhaseRecord>,
    /// Audit failures: approximation, feasibility or phase halving.
    pub violations: Vec<String>,
    /// Smallest `value / MCM` seen at audited events with positive MCM.
    pub worst_ratio: Option<f64>,
    pub uncertified_solves: usize,
    /// Inner iterations summed over all solves.
    pub solver_iterations: usize,
}

impl RunLog {
    pub fn recompute_counts(&self) -> Vec<usize> {
        self.phases.iter().map(|p| p.recomputes).collect()
    }
}

/// Engine options.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub cro: CroConfig,
    /// Compute the exact MCM at every event and check the guarantees.
    pub audit: bool,
    pub timestamps: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { cro: CroConfig::default(), audit: false, timestamps: true }
    }
}

struct Engine<'a> {
    g: BipartiteGraph,
    eps: f64,
    cfg: &'a RunConfig,
    log: RunLog,
    start: Instant,
    layout: Option<ExtendedLayout>,
    warm: WarmStart,
    state: MatchingState,
}

impl Engine<'_> {
    fn solve(&mut self) -> Result<()> {
        let alive = self.g.alive_edges();
        let m_approx = self.state.m_approx as f64;
        let cro = match self.cfg.cro.kind {
            CroKind::BoxSimplex => build_cro_bs(&self.g, &alive, m_approx, self.eps, &self.cfg.cro)?,
            CroKind::Sinkhorn => {
                let layout = self.layout.get_or_insert_with(|| ExtendedLayout::new(&self.g));
                build_cro_sinkhorn(&self.g, &alive, m_approx, self.eps, layout, &self.cfg.cro)?
            }
        };
        let sol = canonical_solve(&self.g, &cro, &self.cfg.cro, &mut self.warm)?;
        if !sol.certified {
            self.log.uncertified_solves += 1;
        }
        self.log.solver_iterations += sol.iterations;
        self.state.x_tilde = vec![0.0; self.g.m()];
        for (k, &e) in cro.edges.iter().enumerate() {
            self.state.x_tilde[e] = sol.x_tilde[k];
        }
        self.state.scale = cro.scale;
        self.state.total_mass = sol.x_tilde.iter().sum();
        self.state.del_mass = 0.0;
        self.state.e_del.clear();
        Ok(())
    }

    /// Records an event; `check` is false for a deletion that is followed at once by a re-solve.
    fn emit(&mut self, event: EventKind, edge: Option<usize>, check: bool) {
        let value = self.state.value(&self.g);
        let mcm = self.cfg.audit.then(|| self.g.mcm());
        if let (Some(mcm), true) = (mcm, check) {
            if event != EventKind::Terminate && mcm > 0 {
                let ratio = value / mcm as f64;
                self.log.worst_ratio = Some(self.log.worst_ratio.map_or(ratio, |w| w.min(ratio)));
                if value < (1.0 - self.eps) * mcm as f64 - 1e-9 {
                    self.log.violations.push(format!(
                        "event {}: value {value} below (1-eps)·MCM = {}",
                        self.log.events.len(),
                        (1.0 - self.eps) * mcm as f64
                    ));
                }
            }
            let load = self.state.max_load(&self.g);
            if load > 1.0 + 1e-12 {
                self.log.violations.push(format!("event {}: vertex load {load} exceeds 1", self.log.events.len()));
            }
        }
        let recompute_count = self.log.phases.last().map_or(0, |p| p.recomputes);
        let elapsed_ns = self.cfg.timestamps.then(|| self.start.elapsed().as_nanos());
        self.log.events.push(Event { event, edge, value, mcm_oracle: mcm, recompute_count, elapsed_ns });
    }

    /// Starts a phase; returns false once the graph has no edges left.
    fn start_phase(&mut self) -> Result<bool> {
        let mcm_now = self.cfg.audit.then(|| self.g.mcm());
        if let (Some(prev), Some(now)) = (self.log.phases.last_mut(), mcm_now) {
            prev.mcm_end = Some(now);
            if let Some(start) = prev.mcm_start {
                if 2 * now > start {
                    self.log.violations.push(format!("phase ended with MCM {now} > half of {start}"));
                }
            }
        }
        let (m_approx, _) = greedy_matching(&self.g);
        self.state.m_approx = m_approx;
        self.state.m_est = m_approx;
        if m_approx == 0 {
            self.state.x_tilde = vec![0.0; self.g.m()];
            self.emit(EventKind::Terminate, None, true);
            return Ok(false);
        }
        self.log.phases.push(PhaseRecord { m_approx, recomputes: 0, mcm_start: mcm_now, mcm_end: None });
        self.layout = None;
        self.warm = WarmStart::default();
        self.solve()?;
        self.emit(EventKind::PhaseRestart, None, true);
        Ok(true)
    }

    fn delete(&mut self, e: usize) -> Result<bool> {
        self.g.delete(e)?;
        self.state.e_del.push(e);
        self.state.del_mass += self.state.x_tilde[e];
        let trigger = self.state.del_mass > self.eps / 8.0 * self.state.total_mass || self.g.alive_count() == 0;
        self.emit(EventKind::Deletion, Some(e), !trigger);
        if !trigger {
            return Ok(true);
        }
        let (m_est, _) = greedy_matching(&self.g);
        self.state.m_est = m_est;
        if 4 * m_est <= self.state.m_approx {
            return self.start_phase();
        }
        self.solve()?;
        if let Some(p) = self.log.phases.last_mut() {
            p.recomputes += 1;
        }
        self.emit(EventKind::Recompute, None, true);
        Ok(true)
    }
}

/// Runs the deletion stream until the graph is empty or the adversary stops.
pub fn dec_matching_run(
    g: &BipartiteGraph,
    epsilon: f64,
    adversary: &mut dyn Adversary,
    cfg: &RunConfig,
) -> Result<RunLog> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return instance("epsilon must lie in (0, 1)");
    }
    if epsilon >= 0.125 {
        log::warn!("epsilon = {epsilon} is outside (0, 1/8); guarantees are checked empirically");
    }
    let mut eng = Engine {
        g: g.clone(),
        eps: epsilon,
        cfg,
        log: RunLog::default(),
        start: Instant::now(),
        layout: None,
        warm: WarmStart::default(),
        state: MatchingState {
            x_tilde: vec![0.0; g.m()],
            scale: 1.0,
            m_approx: 0,
            m_est: 0,
            e_del: Vec::new(),
            del_mass: 0.0,
            total_mass: 0.0,
        },
    };
    if !eng.start_phase()? {
        return Ok(eng.log);
    }
    while let Some(e) = adversary.next(&eng.g, &eng.state.x_tilde) {
        if !eng.delete(e)? {
            break;
        }
    }
    Ok(eng.log)
}
