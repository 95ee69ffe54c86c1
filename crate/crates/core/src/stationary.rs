//! Stationary problem: residual, Jacobian, Newton solver and continuation.
//!
//! With `N(u) = -d u'' + zeta u - |u|^2 u` the stationary equation reads
//! `J N(u) + eps (-u + F) = 0` with `J = [[0, 1], [-1, 0]]` and `F = (f, 0)`.
//! The Newton solver works in the subspace of even fields, which removes the
//! translation kernel and enforces the symmetry of the sought solutions.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::dynamics;
use crate::error::{Error, Result};
use crate::grid::{Field2, Grid};
use crate::linalg;
use crate::model::Params;

/// A converged stationary periodic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub field: Field2,
    pub params: Params,
    /// Sup norm of the residual, re-evaluated after the solve.
    pub residual_norm: f64,
    pub is_even: bool,
    pub pulse_centers: Vec<f64>,
    pub period: f64,
}

impl Solution {
    /// Distances between consecutive detected pulses.
    pub fn pulse_distances(&self) -> Vec<f64> {
        self.pulse_centers.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Assembles a solution record for a field that is already converged.
    pub fn from_field(field: Field2, params: Params) -> Result<Self> {
        let residual_norm = residual(&field, &params).sup_norm();
        let is_even = field.oddness() < 1e-12;
        let background = if params.epsilon > 0.0 {
            dynamics::steady_state(&params)?
        } else {
            [0.0, 0.0]
        };
        let pulse_centers = detect_pulses(&field, background);
        let period = field.grid.period;
        Ok(Self { field, params, residual_norm, is_even, pulse_centers, period })
    }
}

/// Newton solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonOpts {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub restrict_even: bool,
}

impl Default for NewtonOpts {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 40, damping: 1.0, restrict_even: true }
    }
}

impl NewtonOpts {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParams(format!("invalid Newton options {self:?}")));
        }
        Ok(())
    }
}

/// Pointwise residual of the stationary equation.
pub fn residual(field: &Field2, p: &Params) -> Field2 {
    let d2 = field.derivative(2).expect("order 2 is supported");
    let d = p.dispersion();
    let (z, e) = (p.zeta, p.epsilon);
    let n = field.len();
    let mut out = Field2::zeros(field.grid);
    for j in 0..n {
        let (a, b) = (field.u1[j], field.u2[j]);
        let r = a * a + b * b;
        let n1 = -d * d2.u1[j] + z * a - r * a;
        let n2 = -d * d2.u2[j] + z * b - r * b;
        out.u1[j] = n2 - e * a + e * p.f;
        out.u2[j] = -n1 - e * b;
    }
    out
}

/// Real circulant matrix of `-d D^2 + zeta` on the grid.
fn linear_block(grid: Grid, p: &Params) -> Mat<f64> {
    let col = grid.shifted_laplacian_column(0.0);
    let d = p.dispersion();
    let n = grid.n;
    Mat::from_fn(n, n, |j, l| {
        let v = d * col[(j + n - l) % n].re;
        if j == l {
            v + p.zeta
        } else {
            v
        }
    })
}

/// Dense `2n x 2n` Jacobian of [`residual`], ordered as `(u1, u2)` blocks.
pub fn jacobian(field: &Field2, p: &Params) -> Mat<f64> {
    let n = field.len();
    let k = linear_block(field.grid, p);
    let e = p.epsilon;
    let mut m = Mat::<f64>::zeros(2 * n, 2 * n);
    for j in 0..n {
        for l in 0..n {
            let kv = k[(j, l)];
            m[(j, n + l)] = kv;
            m[(n + j, l)] = -kv;
        }
        let (a, b) = (field.u1[j], field.u2[j]);
        m[(j, j)] = -2.0 * a * b - e;
        m[(j, n + j)] -= a * a + 3.0 * b * b;
        m[(n + j, j)] += 3.0 * a * a + b * b;
        m[(n + j, n + j)] = 2.0 * a * b - e;
    }
    m
}

/// Number of independent values of an even field per component.
fn half_len(n: usize) -> usize {
    n / 2 + 1
}

/// Restricts the Jacobian to even fields: rows `0..=n/2` of each block and
/// columns summed over mirror pairs.
fn even_jacobian(full: &Mat<f64>, n: usize) -> Mat<f64> {
    let h = half_len(n);
    Mat::from_fn(2 * h, 2 * h, |r, c| {
        let (rb, ri) = (r / h, r % h);
        let (cb, ci) = (c / h, c % h);
        let row = rb * n + ri;
        let col = cb * n + ci;
        let mirror = (n - ci) % n;
        if mirror == ci {
            full[(row, col)]
        } else {
            full[(row, col)] + full[(row, cb * n + mirror)]
        }
    })
}

fn even_reduce(v: &Field2) -> Vec<f64> {
    let h = half_len(v.len());
    let mut out = v.u1[..h].to_vec();
    out.extend_from_slice(&v.u2[..h]);
    out
}

fn even_expand(grid: Grid, v: &[f64]) -> Field2 {
    let n = grid.n;
    let h = half_len(n);
    let pick = |off: usize| (0..n).map(|j| v[off + j.min(n - j)]).collect();
    Field2 { grid, u1: pick(0), u2: pick(h) }
}

/// Newton step `J^{-1} R` in the chosen subspace.
fn newton_direction(field: &Field2, res: &Field2, p: &Params, opts: &NewtonOpts) -> Result<Field2> {
    let jac = jacobian(field, p);
    if opts.restrict_even {
        let red = even_jacobian(&jac, field.len());
        // Without damping the phase rotation is a symmetry, so the reduced
        // Jacobian keeps a one-dimensional kernel.
        let dv = if p.epsilon == 0.0 {
            linalg::truncated_svd_solve(&red, &even_reduce(res), 1e-10)?
        } else {
            linalg::lu_solve(&red, &even_reduce(res))?
        };
        Ok(even_expand(field.grid, &dv))
    } else {
        let dv = linalg::truncated_svd_solve(&jac, &res.stacked(), 1e-10)?;
        Ok(Field2::from_stacked(field.grid, &dv))
    }
}

/// Damped Newton iteration from `guess`.
pub fn newton_solve(guess: &Field2, p: &Params, opts: &NewtonOpts) -> Result<Solution> {
    p.validate()?;
    opts.validate()?;
    let mut u = if opts.restrict_even { guess.even_project() } else { guess.clone() };
    let mut res = residual(&u, p);
    let mut norm = res.sup_norm();
    let mut iterations = 0;
    while norm >= opts.tol {
        if iterations == opts.max_iter || !norm.is_finite() {
            return Err(Error::NoConvergence { iterations, residual: norm });
        }
        iterations += 1;
        let du = newton_direction(&u, &res, p, opts)?;
        let mut step = opts.damping;
        let mut trial;
        let mut halvings = 0;
        loop {
            trial = u.sub(&du.scale(step));
            if opts.restrict_even {
                trial = trial.even_project();
            }
            let r = residual(&trial, p);
            let tn = r.sup_norm();
            if tn < norm || halvings == 6 {
                res = r;
                norm = tn;
                break;
            }
            step *= 0.5;
            halvings += 1;
        }
        u = trial;
    }
    let sol = Solution::from_field(u, *p)?;
    debug_assert!(sol.residual_norm < opts.tol);
    Ok(sol)
}

fn param_distance(a: &Params, b: &Params) -> f64 {
    ((a.zeta - b.zeta).powi(2) + (a.f - b.f).powi(2) + (a.epsilon - b.epsilon).powi(2)).sqrt()
}

/// Natural-parameter continuation along `path` with a secant predictor.
pub fn continue_in(path: &[Params], guess: &Field2, opts: &NewtonOpts) -> Result<Vec<Solution>> {
    let mut out: Vec<Solution> = Vec::with_capacity(path.len());
    for (i, p) in path.iter().enumerate() {
        let seed = match out.len() {
            0 => guess.clone(),
            1 => out[0].field.clone(),
            m => {
                let (a, b) = (&out[m - 2], &out[m - 1]);
                let prev = param_distance(&a.params, &b.params);
                let next = param_distance(&b.params, p);
                if prev > 0.0 {
                    b.field.add(&b.field.sub(&a.field).scale(next / prev))
                } else {
                    b.field.clone()
                }
            }
        };
        let sol = newton_solve(&seed, p, opts)
            .map_err(|e| Error::ContinuationFailed { index: i, source: Box::new(e) })?;
        out.push(sol);
    }
    Ok(out)
}

/// Transfers an even single-period field to another period: the interior is
/// kept and the region beyond the old half period is filled with the value
/// at the old boundary.
pub fn transfer_to_grid(field: &Field2, target: Grid) -> Field2 {
    let interp = field.interpolant();
    let half_old = 0.5 * field.grid.period;
    let edge = interp.eval(half_old);
    Field2::from_fn(target, |x| if x.abs() < half_old { interp.eval(x) } else { edge })
}

/// Continuation in the period at fixed parameters.
pub fn continue_in_period(start: &Solution, grids: &[Grid], opts: &NewtonOpts) -> Result<Vec<Solution>> {
    let mut out = Vec::with_capacity(grids.len());
    let mut current = start.field.clone();
    for (i, &g) in grids.iter().enumerate() {
        let seed = transfer_to_grid(&current, g);
        let sol = newton_solve(&seed, &start.params, opts)
            .map_err(|e| Error::ContinuationFailed { index: i, source: Box::new(e) })?;
        current = sol.field.clone();
        out.push(sol);
    }
    Ok(out)
}

/// Positions of the local maxima of `|u - background|` above half of the
/// global maximum, refined on the trigonometric interpolant.
pub fn detect_pulses(field: &Field2, background: [f64; 2]) -> Vec<f64> {
    let g = field.grid;
    let n = g.n;
    let dev: Vec<f64> = (0..n)
        .map(|j| (field.u1[j] - background[0]).hypot(field.u2[j] - background[1]))
        .collect();
    let max = dev.iter().copied().fold(0.0, f64::max);
    if max < 1e-10 {
        return Vec::new();
    }
    let interp = field.interpolant();
    let h = g.h();
    let mut centers = Vec::new();
    for j in 0..n {
        let (l, r) = (dev[(j + n - 1) % n], dev[(j + 1) % n]);
        if !(dev[j] > l && dev[j] >= r && dev[j] >= 0.5 * max) {
            continue;
        }
        let denom = l - 2.0 * dev[j] + r;
        let offset = if denom < 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
        let x0 = g.x(j) + offset * h;
        let mut x = x0;
        // Newton on d/dx |u - b|^2 = 0.
        for _ in 0..8 {
            let d = interp.eval_derivs(x);
            let w = [d[0][0] - background[0], d[0][1] - background[1]];
            let g1 = w[0] * d[1][0] + w[1] * d[1][1];
            let g2 = d[1][0] * d[1][0] + d[1][1] * d[1][1] + w[0] * d[2][0] + w[1] * d[2][1];
            if g2 >= 0.0 {
                break;
            }
            let dx = g1 / g2;
            x -= dx;
            if dx.abs() < 1e-14 * (1.0 + x.abs()) {
                break;
            }
        }
        if !((x - x0).abs() <= h) {
            x = x0;
        }
        let wrapped = (x + 0.5 * g.period).rem_euclid(g.period) - 0.5 * g.period;
        centers.push(wrapped);
    }
    centers.sort_by(f64::total_cmp);
    centers
}
