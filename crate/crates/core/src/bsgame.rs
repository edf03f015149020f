//! Regularized box-simplex games and their mirror-prox solver.
//!
//! The game is
//!
//! ```text
//! min_{x ∈ Δ^m} max_{y ∈ [0,1]^n}  yᵀAᵀx + cᵀx − bᵀy + μ Σ xᵢ log xᵢ − (ε/2) (y²)ᵀ|A|ᵀx
//! ```
//!
//! solved by a strongly monotone mirror prox with the joint regularizer
//! `r(x,y) = ρ Σ xᵢ log xᵢ + (1/ρ) xᵀ|A|(y²)`, `ρ = sqrt(2μ/ε)`. Each proximal step
//! is computed by alternating minimization and followed by a padding step that
//! keeps the simplex iterate bounded away from zero. Termination uses a
//! closed-form duality gap certificate.

use serde::{Deserialize, Serialize};

use crate::error::{instance, Result};
use crate::numkit::{self, SparseMatrix};

/// Default column floor.
pub const DEFAULT_DELTA_COL: f64 = 1e-8;

/// An instance of the regularized game, stored in working units where `‖A‖_∞ ≤ 1`.
///
/// If the input matrix has `‖A‖_∞ > 1` the whole objective is divided by that norm
/// on construction; [`RegGame::scale`] converts working objective values back.
#[derive(Debug, Clone)]
pub struct RegGame {
    a: SparseMatrix,
    b: Vec<f64>,
    c: Vec<f64>,
    mu: f64,
    eps_reg: f64,
    b_max: f64,
    c_max: f64,
    delta_col: f64,
    scale: f64,
    padded_columns: Vec<usize>,
}

impl RegGame {
    pub fn new(a: SparseMatrix, b: Vec<f64>, c: Vec<f64>, mu: f64, eps_reg: f64) -> Result<Self> {
        Self::with_column_floor(a, b, c, mu, eps_reg, DEFAULT_DELTA_COL)
    }

    pub fn with_column_floor(
        a: SparseMatrix,
        b: Vec<f64>,
        c: Vec<f64>,
        mu: f64,
        eps_reg: f64,
        delta_col: f64,
    ) -> Result<Self> {
        if a.rows() == 0 {
            return instance("game needs at least one simplex coordinate");
        }
        if b.len() != a.cols() || c.len() != a.rows() {
            return instance(format!(
                "dimension mismatch: A is {}x{}, b has {}, c has {}",
                a.rows(),
                a.cols(),
                b.len(),
                c.len()
            ));
        }
        if b.iter().chain(&c).any(|v| !v.is_finite()) {
            return instance("b and c must be finite");
        }
        if !(mu > 0.0 && mu.is_finite()) || !(eps_reg > 0.0 && eps_reg.is_finite()) {
            return instance("mu and eps_reg must be positive");
        }
        if !(delta_col > 0.0) {
            return instance("column floor must be positive");
        }
        let (a, padded_columns) = pad_columns(&a, delta_col);
        let norm = a.norm_inf();
        let scale = if norm > 1.0 { norm } else { 1.0 };
        let (a, b, c, mu) = if scale > 1.0 {
            (
                a.scaled(1.0 / scale),
                b.iter().map(|v| v / scale).collect(),
                c.iter().map(|v| v / scale).collect(),
                mu / scale,
            )
        } else {
            (a, b, c, mu)
        };
        Ok(Self::from_working(a, b, c, mu, eps_reg, delta_col / scale, scale, padded_columns))
    }

    #[allow(clippy::too_many_arguments)]
    fn from_working(
        a: SparseMatrix,
        b: Vec<f64>,
        c: Vec<f64>,
        mu: f64,
        eps_reg: f64,
        delta_col: f64,
        scale: f64,
        padded_columns: Vec<usize>,
    ) -> Self {
        let c_max = numkit::norm_inf(&c).max(1.0);
        let b_max = numkit::norm_inf(&b).max(c_max);
        Self { a, b, c, mu, eps_reg, b_max, c_max, delta_col, scale, padded_columns }
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }
    pub fn n(&self) -> usize {
        self.a.cols()
    }
    pub fn a(&self) -> &SparseMatrix {
        &self.a
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn c(&self) -> &[f64] {
        &self.c
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn eps_reg(&self) -> f64 {
        self.eps_reg
    }
    pub fn b_max(&self) -> f64 {
        self.b_max
    }
    pub fn c_max(&self) -> f64 {
        self.c_max
    }
    pub fn delta_col(&self) -> f64 {
        self.delta_col
    }
    /// Factor mapping working objective values back to the input units.
    pub fn scale(&self) -> f64 {
        self.scale
    }
    /// Columns that received a synthetic floor entry.
    pub fn padded_columns(&self) -> &[usize] {
        &self.padded_columns
    }
    pub fn rho(&self) -> f64 {
        (2.0 * self.mu / self.eps_reg).sqrt()
    }
    pub fn nu(&self) -> f64 {
        0.5 * (self.mu * self.eps_reg / 2.0).sqrt()
    }

    /// Same matrix and vectors with a different quadratic strength.
    pub fn with_eps_reg(&self, eps_reg: f64) -> Result<Self> {
        if !(eps_reg > 0.0 && eps_reg.is_finite()) {
            return instance("eps_reg must be positive");
        }
        let mut g = self.clone();
        g.eps_reg = eps_reg;
        Ok(g)
    }
}

/// Raises every column whose largest magnitude is below `floor`.
///
/// An empty column gets a new entry in the row with the least ℓ1 mass; a column
/// with small entries has its largest entry raised to the floor (sign kept).
fn pad_columns(a: &SparseMatrix, floor: f64) -> (SparseMatrix, Vec<usize>) {
    let colmax = a.col_abs_max();
    let short: Vec<usize> = (0..a.cols()).filter(|&j| colmax[j] < floor).collect();
    if short.is_empty() {
        return (a.clone(), short);
    }
    let mut t = a.triplets();
    let mut row_mass: Vec<f64> = (0..a.rows()).map(|i| a.row(i).map(|(_, v)| v.abs()).sum()).collect();
    for &j in &short {
        let best = t
            .iter_mut()
            .filter(|e| e.1 == j)
            .fold(None::<&mut (usize, usize, f64)>, |acc, e| match acc {
                Some(p) if p.2.abs() >= e.2.abs() => Some(p),
                _ => Some(e),
            });
        match best {
            Some(e) => {
                row_mass[e.0] += floor - e.2.abs();
                e.2 = if e.2 < 0.0 { -floor } else { floor };
            }
            None => {
                let i = (0..a.rows())
                    .min_by(|&p, &q| row_mass[p].partial_cmp(&row_mass[q]).unwrap().then(p.cmp(&q)))
                    .expect("at least one row");
                row_mass[i] += floor;
                t.push((i, j, floor));
            }
        }
    }
    (SparseMatrix::from_triplets(a.rows(), a.cols(), &t).expect("padding keeps the matrix well formed"), short)
}

/// A primal-dual point `(x, y)` with `x` on the simplex and `y` in the unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PdPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    /// Uniform `x`, zero `y`.
    pub fn center(game: &RegGame) -> Self {
        Self { x: vec![1.0 / game.m() as f64; game.m()], y: vec![0.0; game.n()] }
    }

    pub fn check(&self, game: &RegGame) -> Result<()> {
        if self.x.len() != game.m() || self.y.len() != game.n() {
            return instance("point dimensions do not match the game");
        }
        if self.x.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return instance("x must be strictly positive");
        }
        if self.y.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return instance("y must lie in [0,1]");
        }
        Ok(())
    }
}

fn check_positive(x: &[f64]) -> Result<()> {
    if x.iter().any(|&v| !(v > 0.0)) {
        return instance("x has a nonpositive entry; pad first");
    }
    Ok(())
}

fn squares(y: &[f64]) -> Vec<f64> {
    y.iter().map(|v| v * v).collect()
}

/// `f(x, y)` in working units.
pub fn objective(game: &RegGame, x: &[f64], y: &[f64]) -> f64 {
    let mut atx = vec![0.0; game.n()];
    let mut abs_atx = vec![0.0; game.n()];
    game.a.tmul_into(x, &mut atx, false);
    game.a.tmul_into(x, &mut abs_atx, true);
    let mut s = numkit::dot(&game.c, x) + game.mu * numkit::entropy(x);
    for j in 0..game.n() {
        s += y[j] * (atx[j] - game.b[j]) - 0.5 * game.eps_reg * y[j] * y[j] * abs_atx[j];
    }
    s
}

/// The monotone operator `(∇_x f, −∇_y f)`.
pub fn grad_operator(game: &RegGame, z: &PdPoint) -> Result<(Vec<f64>, Vec<f64>)> {
    check_positive(&z.x)?;
    Ok(grad_unchecked(game, &z.x, &z.y))
}

fn grad_unchecked(game: &RegGame, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (game.m(), game.n());
    let mut ay = vec![0.0; m];
    let mut ay2 = vec![0.0; m];
    game.a.mul_into(y, &mut ay, false);
    game.a.mul_into(&squares(y), &mut ay2, true);
    let gx: Vec<f64> = (0..m)
        .map(|i| ay[i] + game.c[i] + game.mu * (1.0 + x[i].ln()) - 0.5 * game.eps_reg * ay2[i])
        .collect();
    let mut atx = vec![0.0; n];
    let mut abs_atx = vec![0.0; n];
    game.a.tmul_into(x, &mut atx, false);
    game.a.tmul_into(x, &mut abs_atx, true);
    let gy: Vec<f64> = (0..n).map(|j| -atx[j] + game.b[j] + game.eps_reg * y[j] * abs_atx[j]).collect();
    (gx, gy)
}

/// `r(x,y) = ρ Σ xᵢ log xᵢ + (1/ρ) xᵀ|A|(y²)`.
pub fn regularizer_value(game: &RegGame, z: &PdPoint) -> Result<f64> {
    check_positive(&z.x)?;
    let rho = game.rho();
    let mut ay2 = vec![0.0; game.m()];
    game.a.mul_into(&squares(&z.y), &mut ay2, true);
    Ok(rho * numkit::entropy(&z.x) + numkit::dot(&z.x, &ay2) / rho)
}

/// Gradient of the regularizer.
pub fn regularizer_grad(game: &RegGame, z: &PdPoint) -> Result<(Vec<f64>, Vec<f64>)> {
    check_positive(&z.x)?;
    Ok(reg_grad_unchecked(game, &z.x, &z.y))
}

fn reg_grad_unchecked(game: &RegGame, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let rho = game.rho();
    let mut ay2 = vec![0.0; game.m()];
    game.a.mul_into(&squares(y), &mut ay2, true);
    let rx: Vec<f64> = (0..game.m()).map(|i| rho * (1.0 + x[i].ln()) + ay2[i] / rho).collect();
    let mut abs_atx = vec![0.0; game.n()];
    game.a.tmul_into(x, &mut abs_atx, true);
    let ry: Vec<f64> = (0..game.n()).map(|j| 2.0 / rho * y[j] * abs_atx[j]).collect();
    (rx, ry)
}

/// Bregman divergence `V_from(to)` of the regularizer.
pub fn breg_div(game: &RegGame, from: &PdPoint, to: &PdPoint) -> Result<f64> {
    check_positive(&from.x)?;
    if to.x.iter().any(|&v| v < 0.0) {
        return instance("target x has a negative entry");
    }
    Ok(breg_unchecked(game, &from.x, &from.y, &to.x, &to.y))
}

fn breg_unchecked(game: &RegGame, zx: &[f64], zy: &[f64], wx: &[f64], wy: &[f64]) -> f64 {
    let rho = game.rho();
    let mut ent = 0.0;
    for (&w, &z) in wx.iter().zip(zx) {
        ent += if w > 0.0 { w * (w / z).ln() - w + z } else { z };
    }
    let dx: Vec<f64> = wx.iter().zip(zx).map(|(w, z)| w - z).collect();
    let dy: Vec<f64> = wy.iter().zip(zy).map(|(w, z)| w - z).collect();
    let mut at_dx = vec![0.0; game.n()];
    let mut at_wx = vec![0.0; game.n()];
    game.a.tmul_into(&dx, &mut at_dx, true);
    game.a.tmul_into(wx, &mut at_wx, true);
    let quad: f64 = (0..game.n()).map(|j| 2.0 * zy[j] * dy[j] * at_dx[j] + dy[j] * dy[j] * at_wx[j]).sum();
    (rho * ent + quad / rho).max(0.0)
}

/// `wᵀ ∇²r(z) w` for `w = (wx, wy)`.
pub fn hessian_form(game: &RegGame, z: &PdPoint, wx: &[f64], wy: &[f64]) -> Result<f64> {
    check_positive(&z.x)?;
    let rho = game.rho();
    let xx: f64 = wx.iter().zip(&z.x).map(|(w, x)| w * w / x).sum();
    let ywy: Vec<f64> = z.y.iter().zip(wy).map(|(y, w)| y * w).collect();
    let mut a_ywy = vec![0.0; game.m()];
    game.a.mul_into(&ywy, &mut a_ywy, true);
    let cross = numkit::dot(wx, &a_ywy);
    let mut abs_atx = vec![0.0; game.n()];
    game.a.tmul_into(&z.x, &mut abs_atx, true);
    let yy: f64 = wy.iter().zip(&abs_atx).map(|(w, s)| w * w * s).sum();
    Ok(rho * xx + 4.0 / rho * cross + 2.0 / rho * yy)
}

/// `wᵀ D(x) w` with `D(x) = blockdiag((ρ/2) diag(1/x), (1/ρ) diag(|A|ᵀx))`.
pub fn diag_form(game: &RegGame, x: &[f64], wx: &[f64], wy: &[f64]) -> Result<f64> {
    check_positive(x)?;
    let rho = game.rho();
    let xx: f64 = wx.iter().zip(x).map(|(w, x)| w * w / x).sum();
    let mut abs_atx = vec![0.0; game.n()];
    game.a.tmul_into(x, &mut abs_atx, true);
    let yy: f64 = wy.iter().zip(&abs_atx).map(|(w, s)| w * w * s).sum();
    Ok(0.5 * rho * xx + yy / rho)
}

/// Exact maximizer of `f(x, ·)` over the box.
pub fn best_response_y(game: &RegGame, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != game.m() {
        return instance("x dimension does not match the game");
    }
    let (y, _, _) = best_response_parts(game, x);
    Ok(y)
}

fn best_response_parts(game: &RegGame, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = game.n();
    let mut atx = vec![0.0; n];
    let mut abs_atx = vec![0.0; n];
    game.a.tmul_into(x, &mut atx, false);
    game.a.tmul_into(x, &mut abs_atx, true);
    let y = (0..n)
        .map(|j| {
            let num = atx[j] - game.b[j];
            let den = game.eps_reg * abs_atx[j];
            if den > 0.0 {
                (num / den).clamp(0.0, 1.0)
            } else if num > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    (y, atx, abs_atx)
}

/// `f^x(x) = max_y f(x, y)`.
pub fn primal_value(game: &RegGame, x: &[f64]) -> f64 {
    let (y, atx, abs_atx) = best_response_parts(game, x);
    let mut s = numkit::dot(&game.c, x) + game.mu * numkit::entropy(x);
    for j in 0..game.n() {
        s += y[j] * (atx[j] - game.b[j]) - 0.5 * game.eps_reg * y[j] * y[j] * abs_atx[j];
    }
    s
}

/// `L(y) = min_x f(x, y) = softmin_μ(Ay + c − (ε/2)|A|y²) − bᵀy`.
pub fn dual_value(game: &RegGame, y: &[f64]) -> f64 {
    let m = game.m();
    let mut ay = vec![0.0; m];
    let mut ay2 = vec![0.0; m];
    game.a.mul_into(y, &mut ay, false);
    game.a.mul_into(&squares(y), &mut ay2, true);
    let v: Vec<f64> = (0..m).map(|i| ay[i] + game.c[i] - 0.5 * game.eps_reg * ay2[i]).collect();
    numkit::softmin(&v, game.mu).expect("m ≥ 1 and mu > 0") - numkit::dot(&game.b, y)
}

/// The minimizer of `f(·, y)`: `x ∝ exp(−(Ay + c − (ε/2)|A|y²)/μ)`.
pub fn best_response_x(game: &RegGame, y: &[f64]) -> Vec<f64> {
    let m = game.m();
    let mut ay = vec![0.0; m];
    let mut ay2 = vec![0.0; m];
    game.a.mul_into(y, &mut ay, false);
    game.a.mul_into(&squares(y), &mut ay2, true);
    let mut l: Vec<f64> =
        (0..m).map(|i| -(ay[i] + game.c[i] - 0.5 * game.eps_reg * ay2[i]) / game.mu).collect();
    numkit::softmax_in_place(&mut l);
    l
}

/// Duality gap certificate `f^x(x) − max(L(y), L(y_br(x)))`, in working units.
///
/// Upper-bounds both `f^x(x) − min f^x` and the gap of the point `(x, y)`.
pub fn certified_gap(game: &RegGame, z: &PdPoint) -> f64 {
    let ybr = best_response_parts(game, &z.x).0;
    let lower = f64::max(dual_value(game, &z.y), dual_value(game, &ybr));
    primal_value(game, &z.x) - lower
}

/// The shifted operator `g(z) − α∇r(z0) − Θ∇r(z)` that defines a proximal step.
pub fn grad_bs(game: &RegGame, z: &PdPoint, z0: &PdPoint, alpha: f64, big_theta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_positive(&z.x)?;
    check_positive(&z0.x)?;
    let (g, _) = grad_bs_parts(game, z, z0, alpha, big_theta);
    Ok(g)
}

type Pair = (Vec<f64>, Vec<f64>);

fn grad_bs_parts(game: &RegGame, z: &PdPoint, z0: &PdPoint, alpha: f64, big_theta: f64) -> (Pair, Pair) {
    let (mut gx, mut gy) = grad_unchecked(game, &z.x, &z.y);
    let op = (gx.clone(), gy.clone());
    let (r0x, r0y) = reg_grad_unchecked(game, &z0.x, &z0.y);
    for i in 0..gx.len() {
        gx[i] -= alpha * r0x[i];
    }
    for j in 0..gy.len() {
        gy[j] -= alpha * r0y[j];
    }
    if big_theta != 0.0 {
        let (rx, ry) = reg_grad_unchecked(game, &z.x, &z.y);
        for i in 0..gx.len() {
            gx[i] -= big_theta * rx[i];
        }
        for j in 0..gy.len() {
            gy[j] -= big_theta * ry[j];
        }
    }
    ((gx, gy), op)
}

/// Approximation error of a proximal step: `max_w ⟨γ + θ∇r(z), z − w⟩` over the domain.
pub fn prox_error(game: &RegGame, gamma_x: &[f64], gamma_y: &[f64], theta: f64, z: &PdPoint) -> Result<f64> {
    check_positive(&z.x)?;
    let (rx, ry) = reg_grad_unchecked(game, &z.x, &z.y);
    let hx: Vec<f64> = (0..game.m()).map(|i| gamma_x[i] + theta * rx[i]).collect();
    let hmin = hx.iter().copied().fold(f64::INFINITY, f64::min);
    let mut e = numkit::dot(&hx, &z.x) - hmin;
    for j in 0..game.n() {
        let h = gamma_y[j] + theta * ry[j];
        e += h * z.y[j] - h.min(0.0);
    }
    Ok(e.max(0.0))
}

struct AltminOut {
    x: Vec<f64>,
    logx: Vec<f64>,
    y: Vec<f64>,
    sweeps: usize,
    band_dev: f64,
}

/// Alternating minimization for `min_z ⟨γ, z⟩ + θ r(z)`, started at `z0`.
///
/// Runs `T + 1` x-updates and returns `(x^{(T+1)}, y^{(T)})`.
pub fn altmin_bs(
    game: &RegGame,
    gamma_x: &[f64],
    gamma_y: &[f64],
    theta: f64,
    z0: &PdPoint,
    t_cap: usize,
) -> Result<PdPoint> {
    if !(theta > 0.0) {
        return instance("theta must be positive");
    }
    if gamma_x.len() != game.m() || gamma_y.len() != game.n() {
        return instance("gamma dimensions do not match the game");
    }
    check_positive(&z0.x)?;
    if let Some(j) = (0..game.n()).find(|&j| game.a.col_abs_max()[j] == 0.0) {
        return instance(format!("column {j} has no entries"));
    }
    let out = altmin_run(game, gamma_x, gamma_y, theta, &z0.y, t_cap, 0.0, None);
    Ok(PdPoint { x: out.x, y: out.y })
}

#[allow(clippy::too_many_arguments)]
fn altmin_run(
    game: &RegGame,
    gamma_x: &[f64],
    gamma_y: &[f64],
    theta: f64,
    y0: &[f64],
    t_cap: usize,
    tol: f64,
    band: Option<&[f64]>,
) -> AltminOut {
    let (m, n) = (game.m(), game.n());
    let rho = game.rho();
    let base: Vec<f64> = gamma_x.iter().map(|g| -g / (theta * rho)).collect();
    let ycoef: Vec<f64> = gamma_y.iter().map(|g| -rho / (2.0 * theta) * g).collect();
    let inv_rho2 = 1.0 / (rho * rho);
    let mut y = y0.to_vec();
    let mut y2 = squares(&y);
    let mut ay2 = vec![0.0; m];
    let mut logx = vec![0.0; m];
    let mut prev_logx = vec![f64::NAN; m];
    let mut x = vec![0.0; m];
    let mut abs_atx = vec![0.0; n];
    let mut band_dev: f64 = 0.0;
    let mut y_change = f64::INFINITY;
    let mut sweeps = 0;
    for t in 0..=t_cap {
        game.a.mul_into(&y2, &mut ay2, true);
        for i in 0..m {
            logx[i] = base[i] - ay2[i] * inv_rho2;
        }
        let lse = numkit::log_sum_exp(&logx);
        let mut x_change: f64 = 0.0;
        for i in 0..m {
            logx[i] -= lse;
            x[i] = logx[i].exp();
            x_change = x_change.max((logx[i] - prev_logx[i]).abs());
        }
        sweeps = t + 1;
        if let Some(r) = band {
            for i in 0..m {
                band_dev = band_dev.max((logx[i] - r[i]).abs());
            }
        }
        if t == t_cap || (t > 0 && x_change <= tol && y_change <= tol) {
            break;
        }
        prev_logx.copy_from_slice(&logx);
        game.a.tmul_into(&x, &mut abs_atx, true);
        y_change = 0.0;
        for j in 0..n {
            let yn = if abs_atx[j] > 0.0 {
                (ycoef[j] / abs_atx[j]).clamp(0.0, 1.0)
            } else if ycoef[j] > 0.0 {
                1.0
            } else {
                0.0
            };
            y_change = y_change.max((yn - y[j]).abs());
            y[j] = yn;
            y2[j] = yn * yn;
        }
    }
    AltminOut { x, logx, y, sweeps, band_dev }
}

/// `max(x, δ)` renormalized to the simplex.
pub fn pad_simplex(x: &[f64], delta: f64) -> Vec<f64> {
    let p: Vec<f64> = x.iter().map(|&v| v.max(delta)).collect();
    let s: f64 = p.iter().sum();
    p.into_iter().map(|v| v / s).collect()
}

/// Solver parameter regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Parameters exactly as analyzed; preconditions enforced.
    Theory,
    /// Preconditions relaxed to warnings; the step weight α adapts by backtracking
    /// on the relative Lipschitz inequality instead of using its worst-case value.
    Practical,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "theory" => Ok(Mode::Theory),
            "practical" => Ok(Mode::Practical),
            other => Err(format!("unknown mode '{other}' (expected theory or practical)")),
        }
    }
}

/// Knobs for [`solve_with`].
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub mode: Mode,
    /// Multiplier on the inner iteration bound.
    pub c_t: f64,
    /// Multiplier on the outer iteration bound.
    pub c_k: f64,
    /// Hard override of the outer cap.
    pub max_outer: Option<usize>,
    /// Hard override of the inner cap.
    pub max_inner: Option<usize>,
    /// Inner loop exits early once an alternating sweep moves log x and y by at most this.
    pub inner_tol: f64,
    /// Stopping threshold on the certified gap, in input units. Defaults to σ.
    pub gap_tol: Option<f64>,
    /// Starting point; padded before use. Defaults to uniform x and zero y.
    pub warm_start: Option<PdPoint>,
    /// Track the multiplicative stability bands of the inner iterates.
    pub track_stability: bool,
    /// Stop once this many outer iterations pass without a 0.1% gap improvement.
    /// Defaults to 2000 in practical mode and off in theory mode.
    pub stall_window: Option<usize>,
}

impl SolverConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            c_t: 4.0,
            c_k: 4.0,
            max_outer: None,
            max_inner: None,
            inner_tol: 1e-13,
            gap_tol: None,
            warm_start: None,
            track_stability: mode == Mode::Theory,
            stall_window: (mode == Mode::Practical).then_some(2000),
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::new(Mode::Theory)
    }
}

/// Derived solver constants, all in working units.
#[derive(Debug, Clone, Serialize)]
pub struct SolverParams {
    pub rho: f64,
    pub nu: f64,
    pub alpha: f64,
    pub delta: f64,
    /// `eps_reg·σ²/m²` before the denormal floor.
    pub delta_requested: f64,
    pub inner_cap: usize,
    pub outer_cap: usize,
    pub gap_tol: f64,
    /// Range of the regularizer over the domain, `ρ log m`.
    pub theta_range: f64,
    pub c_t: f64,
    pub c_k: f64,
}

impl SolverParams {
    /// Constants for target accuracy `sigma` (input units).
    pub fn new(game: &RegGame, sigma: f64, cfg: &SolverConfig) -> Self {
        let (m, n) = (game.m() as f64, game.n().max(1) as f64);
        let (mu, eps) = (game.mu, game.eps_reg);
        let sigma_w = sigma / game.scale;
        let rho = game.rho();
        let nu = game.nu();
        let delta_requested = eps * sigma_w * sigma_w / (m * m);
        let delta = delta_requested.max(1e-300 * m).min(0.5 / m);
        let alpha = 18.0 * game.c_max + 32.0 * (mu * eps / 2.0).sqrt() * (4.0 / delta).ln();
        let t = cfg.c_t * (m * n * game.b_max * alpha * rho / (delta * sigma_w)).ln().max(1.0);
        let lk = (nu * m.ln() / sigma_w).ln().max(1.0);
        let k = cfg.c_k * (alpha / nu) * lk;
        let gap_tol = cfg.gap_tol.unwrap_or(sigma) / game.scale;
        Self {
            rho,
            nu,
            alpha,
            delta,
            delta_requested,
            inner_cap: cfg.max_inner.unwrap_or_else(|| t.ceil().min(1e9) as usize).max(1),
            outer_cap: cfg.max_outer.unwrap_or_else(|| k.ceil().min(1e12) as usize),
            gap_tol,
            theta_range: rho * m.ln(),
            c_t: cfg.c_t,
            c_k: cfg.c_k,
        }
    }
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    pub gap: f64,
    pub min_x: f64,
    pub padded: bool,
}

/// Largest observed `|log x^{(t+1)} − log reference|` for the two half-steps.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StabilityRecord {
    pub first_half: f64,
    pub second_half: f64,
}

/// Outcome and telemetry of a solve. Gaps are in input units.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub mode: Mode,
    pub certified: bool,
    pub outer_iterations: usize,
    pub inner_iterations_total: usize,
    pub final_gap: f64,
    pub l1_bound: f64,
    pub scale: f64,
    pub params: SolverParams,
    /// Step weight in use when the solve ended (differs from `params.alpha` in practical mode).
    pub final_alpha: f64,
    pub rejected_steps: usize,
    pub stability: Option<StabilityRecord>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub trace: Vec<TraceEntry>,
}

/// Everything an observer sees after one outer iteration.
pub struct StepView<'a> {
    pub k: usize,
    pub alpha: f64,
    pub nu: f64,
    pub z_prev: &'a PdPoint,
    pub z_half: &'a PdPoint,
    /// Second half-step output before padding.
    pub z_bar: &'a PdPoint,
    pub z_next: &'a PdPoint,
    pub gamma_half: (&'a [f64], &'a [f64]),
    pub gamma_full: (&'a [f64], &'a [f64]),
}

/// Solves to certified accuracy `sigma` with default configuration.
pub fn solve(game: &RegGame, sigma: f64, mode: Mode) -> Result<(PdPoint, SolveReport)> {
    solve_with(game, sigma, &SolverConfig::new(mode))
}

pub fn solve_with(game: &RegGame, sigma: f64, cfg: &SolverConfig) -> Result<(PdPoint, SolveReport)> {
    solve_observed(game, sigma, cfg, |_| {})
}

/// Solver with a callback invoked after every accepted outer iteration.
pub fn solve_observed<F: FnMut(&StepView<'_>)>(
    game: &RegGame,
    sigma: f64,
    cfg: &SolverConfig,
    mut observer: F,
) -> Result<(PdPoint, SolveReport)> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return instance("sigma must be positive");
    }
    let params = SolverParams::new(game, sigma, cfg);
    let mut warnings = Vec::new();
    let (m, mu, eps) = (game.m(), game.mu, game.eps_reg);
    let rho = params.rho;
    let preconditions = [
        (mu >= 72.0 * eps * (1.0 - 1e-12), format!("mu = {mu:e} below 72·eps_reg = {:e}", 72.0 * eps)),
        (mu <= 1.0, format!("mu = {mu:e} above 1")),
        (rho >= 6.0, format!("rho = {rho:.3} below 6")),
    ];
    for (ok, msg) in preconditions {
        if !ok {
            match cfg.mode {
                Mode::Theory => return instance(format!("theory mode precondition failed: {msg}")),
                Mode::Practical => warnings.push(msg),
            }
        }
    }
    if rho < 3.0 {
        warnings.push(format!("rho = {rho:.3} below 3: the regularizer may be nonconvex"));
    }
    let sigma_w = sigma / game.scale;
    if m > 1 && !(sigma_w > (m as f64).powi(-10) && sigma_w < 1.0) {
        warnings.push(format!("sigma = {sigma:e} outside (m^-10, 1)"));
    }
    if params.delta_requested < params.delta {
        warnings.push(format!("padding floor raised from {:e} to {:e}", params.delta_requested, params.delta));
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let mut report = SolveReport {
        mode: cfg.mode,
        certified: false,
        outer_iterations: 0,
        inner_iterations_total: 0,
        final_gap: f64::INFINITY,
        l1_bound: f64::INFINITY,
        scale: game.scale,
        final_alpha: params.alpha,
        params: params.clone(),
        rejected_steps: 0,
        stability: cfg.track_stability.then(StabilityRecord::default),
        warnings,
        trace: Vec::new(),
    };

    let mut z = match &cfg.warm_start {
        Some(w) => {
            if w.x.len() != m || w.y.len() != game.n() {
                return instance("warm start dimensions do not match the game");
            }
            PdPoint { x: pad_simplex(&w.x, params.delta), y: w.y.iter().map(|v| v.clamp(0.0, 1.0)).collect() }
        }
        None => PdPoint::center(game),
    };
    if m == 1 {
        z.y = best_response_y(game, &z.x)?;
    }
    let mut best = z.clone();
    let mut best_gap = certified_gap(game, &z);
    let finish = |report: &mut SolveReport, best: PdPoint, best_gap: f64| {
        report.final_gap = best_gap.max(0.0) * game.scale;
        report.l1_bound = (2.0 * best_gap.max(0.0) / mu).sqrt();
        report.certified = best_gap <= params.gap_tol;
        if !report.certified {
            log::warn!("solve stopped uncertified: gap {:e} > {:e}", report.final_gap, params.gap_tol * game.scale);
        }
        Ok((best, report.clone()))
    };
    if best_gap <= params.gap_tol || m == 1 {
        return finish(&mut report, best, best_gap);
    }

    let nu = params.nu;
    let mut alpha = match cfg.mode {
        Mode::Theory => params.alpha,
        Mode::Practical => 1.0f64.min(params.alpha),
    };
    let mut k = 0;
    let (mut last_improved, mut stall_ref) = (0, best_gap);
    while k < params.outer_cap {
        let ((g1x, g1y), (op_prev_x, op_prev_y)) = grad_bs_parts(game, &z, &z, alpha, 0.0);
        let band1 = if report.stability.is_some() { Some(z_logs(&z.x)) } else { None };
        let h = altmin_run(game, &g1x, &g1y, alpha, &z.y, params.inner_cap, cfg.inner_tol, band1.as_deref());
        let z_half = PdPoint { x: h.x, y: h.y };
        let ((g2x, g2y), (op_half_x, op_half_y)) = grad_bs_parts(game, &z_half, &z, alpha, nu);
        let band2 = band1.as_ref().map(|l1| {
            let w = alpha / (alpha + nu);
            l1.iter().zip(&h.logx).map(|(a, b)| w * a + (1.0 - w) * b).collect::<Vec<f64>>()
        });
        let f = altmin_run(game, &g2x, &g2y, alpha + nu, &z_half.y, params.inner_cap, cfg.inner_tol, band2.as_deref());
        report.inner_iterations_total += h.sweeps + f.sweeps;
        let z_bar = PdPoint { x: f.x, y: f.y };

        if cfg.mode == Mode::Practical {
            let dx: Vec<f64> = (0..m).map(|i| z_half.x[i] - z_bar.x[i]).collect();
            let dy: Vec<f64> = (0..game.n()).map(|j| z_half.y[j] - z_bar.y[j]).collect();
            let lhs: f64 = (0..m).map(|i| (op_half_x[i] - op_prev_x[i]) * dx[i]).sum::<f64>()
                + (0..game.n()).map(|j| (op_half_y[j] - op_prev_y[j]) * dy[j]).sum::<f64>();
            let rhs = alpha
                * (breg_unchecked(game, &z.x, &z.y, &z_half.x, &z_half.y)
                    + breg_unchecked(game, &z_half.x, &z_half.y, &z_bar.x, &z_bar.y));
            if lhs > rhs * (1.0 + 1e-10) + 1e-300 {
                alpha *= 2.0;
                report.rejected_steps += 1;
                continue;
            }
        }
        if let Some(s) = report.stability.as_mut() {
            s.first_half = s.first_half.max(h.band_dev);
            s.second_half = s.second_half.max(f.band_dev);
            debug_assert!(
                cfg.mode != Mode::Theory || (h.band_dev <= 1.0 / 9.0 + 1e-9 && f.band_dev <= 1.0 / 9.0 + 1e-9),
                "inner iterate left the stability band"
            );
        }

        let min_bar = z_bar.x.iter().copied().fold(f64::INFINITY, f64::min);
        let padded = min_bar < params.delta;
        let z_next = PdPoint { x: if padded { pad_simplex(&z_bar.x, params.delta) } else { z_bar.x.clone() }, y: z_bar.y.clone() };
        let gap = certified_gap(game, &z_next);
        k += 1;
        report.outer_iterations = k;
        report.trace.push(TraceEntry {
            gap: gap * game.scale,
            min_x: z_next.x.iter().copied().fold(f64::INFINITY, f64::min),
            padded,
        });
        observer(&StepView {
            k,
            alpha,
            nu,
            z_prev: &z,
            z_half: &z_half,
            z_bar: &z_bar,
            z_next: &z_next,
            gamma_half: (&g1x, &g1y),
            gamma_full: (&g2x, &g2y),
        });
        if gap < best_gap {
            best_gap = gap;
            best = z_next.clone();
        }
        z = z_next;
        report.final_alpha = alpha;
        if gap <= params.gap_tol {
            break;
        }
        if gap < stall_ref * (1.0 - 1e-3) {
            (last_improved, stall_ref) = (k, gap);
        }
        if cfg.stall_window.is_some_and(|w| k - last_improved >= w) {
            let msg = format!("gap stalled at {:e} after {k} outer iterations", best_gap * game.scale);
            log::info!("{msg}");
            report.warnings.push(msg);
            break;
        }
        if cfg.mode == Mode::Practical {
            alpha = (alpha * 0.9).max(nu);
        }
    }
    if let Some(s) = &report.stability {
        let band = 1.0 / 9.0;
        if s.first_half > band || s.second_half > band {
            let msg = format!("stability band exceeded: {:e} / {:e}", s.first_half, s.second_half);
            log::warn!("{msg}");
            report.warnings.push(msg);
        }
    }
    finish(&mut report, best, best_gap)
}

fn z_logs(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.ln()).collect()
}

/// Drops the simplex coordinates whose cost exceeds `min(c) + tau`.
///
/// Returns the restricted game and, for each surviving coordinate, its index in
/// the original game.
pub fn truncate_costs(game: &RegGame, tau: f64) -> Result<(RegGame, Vec<usize>)> {
    if !(tau >= 0.0) {
        return instance("tau must be nonnegative");
    }
    let cmin = game.c.iter().copied().fold(f64::INFINITY, f64::min);
    let keep: Vec<usize> = (0..game.m()).filter(|&i| game.c[i] - cmin <= tau).collect();
    let a = game.a.select_rows(&keep);
    let (a, mut padded) = pad_columns(&a, game.delta_col);
    padded.extend_from_slice(&game.padded_columns);
    padded.sort_unstable();
    padded.dedup();
    let c = keep.iter().map(|&i| game.c[i]).collect();
    let g = RegGame::from_working(a, game.b.clone(), c, game.mu, game.eps_reg, game.delta_col, game.scale, padded);
    Ok((g, keep))
}

/// Re-embeds a truncated solution into the original coordinates.
pub fn embed_truncated(x: &[f64], keep: &[usize], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for (&i, &v) in keep.iter().zip(x) {
        out[i] = v;
    }
    out
}

/// `max_y` of the game without the quadratic term: `cᵀx + μH(x) + Σ_j (Aᵀx − b)_j⁺`.
pub fn half_regularized_value(game: &RegGame, x: &[f64]) -> f64 {
    let mut atx = vec![0.0; game.n()];
    game.a.tmul_into(x, &mut atx, false);
    numkit::dot(&game.c, x)
        + game.mu * numkit::entropy(x)
        + (0..game.n()).map(|j| (atx[j] - game.b[j]).max(0.0)).sum::<f64>()
}

/// Solves the game without the quadratic term to additive accuracy `epsilon` (input units).
///
/// The quadratic strength is set to `epsilon` (in working units) and the
/// regularized game is solved to `epsilon/2`; the quadratic term moves the
/// objective by at most `epsilon/2`.
pub fn solve_half_regularized(
    a: SparseMatrix,
    b: Vec<f64>,
    c: Vec<f64>,
    mu: f64,
    epsilon: f64,
    cfg: &SolverConfig,
) -> Result<(PdPoint, SolveReport, RegGame)> {
    if !(epsilon > 0.0) {
        return instance("epsilon must be positive");
    }
    let probe = RegGame::new(a, b, c, mu, 1.0)?;
    let game = probe.with_eps_reg(epsilon / probe.scale)?;
    let (z, report) = solve_with(&game, epsilon / 2.0, cfg)?;
    Ok((z, report, game))
}
