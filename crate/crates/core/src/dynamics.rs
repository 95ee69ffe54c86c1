//! Spatial dynamics of the stationary problem.
//!
//! Stationary solutions solve the first-order system `U' = F(U)` on `R^4`
//! with `U = (u1, u2, u1', u2')`. The system is reversible under
//! `R = diag(1, 1, -1, -1)`, and symmetric periodic orbits cross
//! `Fix(R) = {U3 = U4 = 0}` at `x = 0` and at half the period.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field2;
use crate::linalg;
use crate::model::Params;
use crate::stationary::{self, Solution};

pub type StateVec = [f64; 4];

/// Applies the reverser `R = diag(1, 1, -1, -1)`.
pub fn reverse(u: &StateVec) -> StateVec {
    [u[0], u[1], -u[2], -u[3]]
}

pub fn vector_field(u: &StateVec, p: &Params) -> StateVec {
    let (z, e, d) = (p.zeta, p.epsilon, p.dispersion());
    let r = u[0] * u[0] + u[1] * u[1];
    [
        u[2],
        u[3],
        (z * u[0] + e * u[1] - r * u[0]) / d,
        (z * u[1] - e * u[0] - r * u[1] + e * p.f) / d,
    ]
}

/// Jacobian `dF/dU` as a row-major 4x4 array.
pub fn vector_field_jacobian(u: &StateVec, p: &Params) -> [[f64; 4]; 4] {
    let (z, e, d) = (p.zeta, p.epsilon, p.dispersion());
    let (a, b) = (u[0], u[1]);
    [
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [(z - 3.0 * a * a - b * b) / d, (e - 2.0 * a * b) / d, 0.0, 0.0],
        [(-e - 2.0 * a * b) / d, (z - a * a - 3.0 * b * b) / d, 0.0, 0.0],
    ]
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det4(m: &[[f64; 4]; 4]) -> f64 {
    let mut a = *m;
    let mut det = 1.0;
    for c in 0..4 {
        let piv = (c..4).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[piv][c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            a.swap(piv, c);
            det = -det;
        }
        det *= a[c][c];
        for r in c + 1..4 {
            let factor = a[r][c] / a[c][c];
            for k in c..4 {
                a[r][k] -= factor * a[c][k];
            }
        }
    }
    det
}

/// `det dF/dU(0)` at `epsilon = 0`, which equals `zeta^2`.
pub fn origin_determinant(zeta: f64) -> f64 {
    let p = Params { zeta, f: 1.0, epsilon: 0.0, d: None };
    det4(&vector_field_jacobian(&[0.0; 4], &p))
}

/// Constant state with its spatial eigenvalues `+-alpha +- i beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub u_inf: [f64; 2],
    pub state: StateVec,
    pub alpha: f64,
    pub beta: f64,
    /// `nu_+` and `nu_-` with `nu^2 = zeta - 2|u|^2 +- i sqrt(eps^2 - |u|^4)`.
    pub nu: [Complex64; 2],
    /// Eigenvalues of the 4x4 Jacobian from a direct dense solve.
    pub eigenvalues: [Complex64; 4],
}

impl Equilibrium {
    pub fn is_saddle_focus(&self) -> bool {
        self.alpha > 0.0 && self.beta > 0.0
    }
}

/// Closed-form `nu^2_{+-}` for a constant state of intensity `|u|^2 = rho`.
pub fn nu_squared(p: &Params, rho: f64) -> [Complex64; 2] {
    let disc = Complex64::new(p.epsilon * p.epsilon - rho * rho, 0.0).sqrt();
    let base = Complex64::new(p.zeta - 2.0 * rho, 0.0);
    let i = Complex64::new(0.0, 1.0);
    [base + i * disc, base - i * disc]
}

/// Intensity `rho = |u_inf|^2` on the branch that emanates from 0 at
/// `epsilon = 0`: the smallest positive root of
/// `rho ((zeta - rho)^2 + eps^2) = eps^2 f^2`.
fn background_intensity(p: &Params) -> f64 {
    let (z, e, f) = (p.zeta, p.epsilon, p.f);
    let target = e * e * f * f;
    let g = |r: f64| r * ((z - r) * (z - r) + e * e) - target;
    if target == 0.0 {
        return 0.0;
    }
    let disc = z * z - 3.0 * e * e;
    let (lo, mut hi) = if disc > 0.0 {
        let fold = (2.0 * z - disc.sqrt()) / 3.0;
        if g(fold) >= 0.0 {
            (0.0, fold)
        } else {
            ((2.0 * z + disc.sqrt()) / 3.0, 2.0 * z + 1.0)
        }
    } else {
        (0.0, 2.0 * z + 1.0)
    };
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = lo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Constant solution `u_inf` of the stationary problem.
///
/// The intensity equation fixes the branch; a 2x2 Newton polish then drives
/// `|F(U_inf)|` to round-off.
pub fn steady_state(p: &Params) -> Result<[f64; 2]> {
    p.validate()?;
    if p.epsilon == 0.0 {
        return Ok([0.0, 0.0]);
    }
    let rho = background_intensity(p);
    // u = -i eps f / (zeta - rho - i eps)
    let w = Complex64::new(0.0, -p.epsilon * p.f) / Complex64::new(p.zeta - rho, -p.epsilon);
    let mut u = [w.re, w.im];
    for _ in 0..20 {
        let st = [u[0], u[1], 0.0, 0.0];
        let r = vector_field(&st, p);
        let res = r[2].abs().max(r[3].abs());
        if res < 1e-15 * (1.0 + p.zeta) {
            break;
        }
        let j = vector_field_jacobian(&st, p);
        let (a, b, c, d) = (j[2][0], j[2][1], j[3][0], j[3][1]);
        let det = a * d - b * c;
        if det == 0.0 {
            break;
        }
        u[0] -= (d * r[2] - b * r[3]) / det;
        u[1] -= (-c * r[2] + a * r[3]) / det;
    }
    let r = vector_field(&[u[0], u[1], 0.0, 0.0], p);
    let res = r[2].abs().max(r[3].abs());
    if !(res < 1e-12) {
        return Err(Error::NoConvergence { iterations: 20, residual: res });
    }
    Ok(u)
}

/// Equilibrium with eigen-data. Fails with [`Error::NotSaddleFocus`] when the
/// spatial eigenvalues are not of the form `+-alpha +- i beta`, which
/// includes the degenerate limit `epsilon = 0`; use [`equilibrium_data`] to
/// inspect the eigenvalues in that case.
pub fn equilibrium(p: &Params) -> Result<Equilibrium> {
    let eq = equilibrium_data(p)?;
    if !eq.is_saddle_focus() {
        return Err(Error::NotSaddleFocus { alpha: eq.alpha, beta: eq.beta });
    }
    Ok(eq)
}

/// Equilibrium and eigenvalues without the saddle-focus requirement.
pub fn equilibrium_data(p: &Params) -> Result<Equilibrium> {
    let u = steady_state(p)?;
    let state = [u[0], u[1], 0.0, 0.0];
    let rho = u[0] * u[0] + u[1] * u[1];
    let nu2 = nu_squared(p, rho);
    let nu = [nu2[0].sqrt(), nu2[1].sqrt()];
    let j = vector_field_jacobian(&state, p);
    let m = Mat::from_fn(4, 4, |r, c| j[r][c]);
    let ev = linalg::eigenvalues_real(&m)?;
    let eigenvalues = [ev[0], ev[1], ev[2], ev[3]];
    // Only a genuine complex quadruple counts as a saddle-focus; real
    // eigenvalue pairs report beta = 0.
    let quadruple = p.epsilon * p.epsilon > rho * rho;
    let alpha = nu[0].re.abs().min(nu[1].re.abs());
    let beta = if quadruple { nu[0].im.abs() } else { 0.0 };
    Ok(Equilibrium { u_inf: u, state, alpha, beta, nu, eigenvalues })
}

/// The four values `+-sqrt(nu^2_{+-})`.
pub fn closed_form_eigenvalues(eq: &Equilibrium) -> [Complex64; 4] {
    [eq.nu[0], -eq.nu[0], eq.nu[1], -eq.nu[1]]
}

/// Largest distance between the direct eigenvalues and the closed form,
/// after optimal matching.
pub fn eigenvalue_mismatch(eq: &Equilibrium) -> f64 {
    let closed = closed_form_eigenvalues(eq);
    let mut best = f64::INFINITY;
    let perms = permutations4();
    for perm in perms {
        let worst = (0..4)
            .map(|i| (eq.eigenvalues[i] - closed[perm[i]]).norm())
            .fold(0.0, f64::max);
        best = best.min(worst);
    }
    best
}

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let distinct = (0..4).all(|i| (i + 1..4).all(|j| p[i] != p[j]));
                    if distinct {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// Options for the embedded Dormand-Prince 5(4) integrator.
#[derive(Debug, Clone, Copy)]
pub struct IntegratorOpts {
    pub tol: f64,
    pub escape_radius: f64,
    pub max_steps: usize,
}

impl IntegratorOpts {
    pub fn for_params(p: &Params) -> Self {
        Self { tol: 1e-12, escape_radius: 10.0 * (2.0 * p.zeta).sqrt(), max_steps: 2_000_000 }
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &StateVec, terms: &[(f64, &StateVec)], h: f64) -> StateVec {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..4 {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrates `U' = F(U)` from `x0` to `x1` (either direction).
pub fn integrate(p: &Params, x0: f64, y0: StateVec, x1: f64, opts: &IntegratorOpts) -> Result<StateVec> {
    let span = x1 - x0;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    let mut x = x0;
    let mut y = y0;
    let mut h = dir * (0.01f64).min(span.abs());
    let mut k1 = vector_field(&y, p);
    for _ in 0..opts.max_steps {
        if (x1 - x) * dir <= 0.0 {
            return Ok(y);
        }
        if (x + h - x1) * dir > 0.0 {
            h = x1 - x;
        }
        let k2 = vector_field(&axpy(&y, &[(A21, &k1)], h), p);
        let k3 = vector_field(&axpy(&y, &[(A31, &k1), (A32, &k2)], h), p);
        let k4 = vector_field(&axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h), p);
        let k5 = vector_field(&axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h), p);
        let k6 = vector_field(
            &axpy(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h),
            p,
        );
        let ynew = axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
        let k7 = vector_field(&ynew, p);
        let mut err = 0.0;
        for i in 0..4 {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.tol + opts.tol * y[i].abs().max(ynew[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / 4.0).sqrt();
        if err <= 1.0 {
            x += h;
            y = ynew;
            k1 = k7;
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm <= opts.escape_radius) {
                return Err(Error::IntegratorBlowup { x, radius: opts.escape_radius });
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        let factor = if err.is_finite() { factor } else { 0.2 };
        h *= factor;
        if h.abs() < 1e-12 * (1.0 + x.abs()) {
            return Err(Error::StepSizeUnderflow { x });
        }
    }
    Err(Error::StepSizeUnderflow { x })
}

/// Options for reversible multiple shooting.
#[derive(Debug, Clone, Copy)]
pub struct ShootOpts {
    /// Target for the largest continuity mismatch.
    pub tol: f64,
    pub max_iter: usize,
    /// Finite-difference step for the sensitivities.
    pub fd_step: f64,
    /// Largest segment length in units of `1/sqrt(zeta)`.
    pub segment_scale: f64,
}

impl Default for ShootOpts {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 30, fd_step: 1e-7, segment_scale: 4.0 }
    }
}

/// Symmetric periodic orbit found by shooting, stored as states at nodes
/// `0 = x_0 < ... < x_K = T/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotOrbit {
    pub params: Params,
    pub half_period: f64,
    pub nodes: Vec<f64>,
    pub states: Vec<StateVec>,
    /// Largest continuity mismatch between consecutive segments.
    pub mismatch: f64,
    pub iterations: usize,
}

impl ShotOrbit {
    /// Corrected section point `(U1, U2, 0, 0)` at `x = 0`.
    pub fn initial(&self) -> StateVec {
        self.states[0]
    }

    /// State at `x = T/2`, which lies in `Fix(R)`.
    pub fn terminal(&self) -> StateVec {
        *self.states.last().unwrap()
    }

    /// State at any `x`, using periodicity and `U(-x) = R U(x)`.
    pub fn eval(&self, x: f64) -> Result<StateVec> {
        let period = 2.0 * self.half_period;
        let mut s = x.rem_euclid(period);
        let mut mirrored = false;
        if s > self.half_period {
            s = period - s;
            mirrored = true;
        }
        let i = match self.nodes.iter().rposition(|&n| n <= s) {
            Some(i) if i + 1 < self.nodes.len() => i,
            _ => self.nodes.len() - 2,
        };
        let opts = IntegratorOpts::for_params(&self.params);
        let u = integrate(&self.params, self.nodes[i], self.states[i], s, &opts)?;
        Ok(if mirrored { reverse(&u) } else { u })
    }

    /// Samples `(u1, u2)` of the orbit on a collocation grid.
    pub fn sample(&self, grid: crate::grid::Grid) -> Result<Field2> {
        let mut f = Field2::zeros(grid);
        for j in 0..grid.n {
            let u = self.eval(grid.x(j))?;
            f.u1[j] = u[0];
            f.u2[j] = u[1];
        }
        Ok(f)
    }
}

fn shooting_nodes(half_period: f64, p: &Params, opts: &ShootOpts) -> Vec<f64> {
    let seg = opts.segment_scale / p.zeta.sqrt();
    let k = ((half_period / seg).ceil() as usize).max(1);
    (0..=k).map(|i| half_period * i as f64 / k as f64).collect()
}

/// Packs node states into the unknown vector: `(a, b)` at `x_0`, full states
/// at interior nodes, `(c, d)` at `x_K`.
fn pack(states: &[StateVec]) -> Vec<f64> {
    let k = states.len() - 1;
    let mut z = vec![states[0][0], states[0][1]];
    for s in &states[1..k] {
        z.extend_from_slice(s);
    }
    z.push(states[k][0]);
    z.push(states[k][1]);
    z
}

fn unpack(z: &[f64], k: usize) -> Vec<StateVec> {
    let mut out = Vec::with_capacity(k + 1);
    out.push([z[0], z[1], 0.0, 0.0]);
    for i in 1..k {
        let o = 2 + 4 * (i - 1);
        out.push([z[o], z[o + 1], z[o + 2], z[o + 3]]);
    }
    let o = z.len() - 2;
    out.push([z[o], z[o + 1], 0.0, 0.0]);
    out
}

fn shooting_residual(p: &Params, nodes: &[f64], states: &[StateVec]) -> Result<Vec<f64>> {
    let opts = IntegratorOpts::for_params(p);
    let k = nodes.len() - 1;
    let mut r = Vec::with_capacity(4 * k);
    for i in 0..k {
        let end = integrate(p, nodes[i], states[i], nodes[i + 1], &opts)?;
        for c in 0..4 {
            r.push(end[c] - states[i + 1][c]);
        }
    }
    Ok(r)
}

/// Symmetric periodic orbit through the section point `(guess, 0, 0)`.
///
/// Interior shooting nodes are seeded by integrating forward from the guess
/// while the trajectory still approaches the equilibrium, and by the
/// equilibrium itself afterwards.
pub fn shoot_symmetric_periodic(half_period: f64, p: &Params, guess: [f64; 2]) -> Result<ShotOrbit> {
    let opts = ShootOpts::default();
    let nodes = shooting_nodes(half_period, p, &opts);
    let eq = steady_state(p)?;
    let eq_state = [eq[0], eq[1], 0.0, 0.0];
    let dist = |u: &StateVec| (0..4).map(|i| (u[i] - eq_state[i]).powi(2)).sum::<f64>().sqrt();
    let iopts = IntegratorOpts::for_params(p);
    let mut seeds = vec![[guess[0], guess[1], 0.0, 0.0]];
    let mut following = true;
    let mut last = dist(&seeds[0]);
    for i in 1..nodes.len() {
        if following {
            match integrate(p, nodes[i - 1], seeds[i - 1], nodes[i], &iopts) {
                Ok(u) if dist(&u) < last && i < nodes.len() / 2 + 1 => {
                    last = dist(&u);
                    seeds.push(u);
                    continue;
                }
                _ => following = false,
            }
        }
        seeds.push(eq_state);
    }
    shoot_from_seeds(half_period, p, nodes, seeds, &opts)
}

/// Shooting seeded at every node by the trigonometric interpolant of a
/// collocation solution. The shooting Newton iteration is independent of the
/// collocation discretization; only the starting point is shared.
pub fn shoot_from_solution(sol: &Solution) -> Result<ShotOrbit> {
    let opts = ShootOpts::default();
    let half = 0.5 * sol.field.grid.period;
    let nodes = shooting_nodes(half, &sol.params, &opts);
    let interp = sol.field.interpolant();
    let seeds = nodes
        .iter()
        .map(|&x| {
            let d = interp.eval_derivs(x);
            [d[0][0], d[0][1], d[1][0], d[1][1]]
        })
        .collect();
    shoot_from_seeds(half, &sol.params, nodes, seeds, &opts)
}

fn shoot_from_seeds(
    half_period: f64,
    p: &Params,
    nodes: Vec<f64>,
    mut seeds: Vec<StateVec>,
    opts: &ShootOpts,
) -> Result<ShotOrbit> {
    let k = nodes.len() - 1;
    seeds[0][2] = 0.0;
    seeds[0][3] = 0.0;
    seeds[k][2] = 0.0;
    seeds[k][3] = 0.0;
    let mut z = pack(&seeds);
    let m = z.len();
    let mut res = shooting_residual(p, &nodes, &unpack(&z, k))?;
    let mut norm = res.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for iter in 0..opts.max_iter {
        if norm < opts.tol {
            return Ok(ShotOrbit {
                params: *p,
                half_period,
                nodes,
                states: unpack(&z, k),
                mismatch: norm,
                iterations: iter,
            });
        }
        let mut jac = Mat::<f64>::zeros(m, m);
        for c in 0..m {
            let mut zp = z.clone();
            let step = opts.fd_step * (1.0 + z[c].abs());
            zp[c] += step;
            // Only the two segments touching the perturbed node change.
            let node = if c < 2 { 0 } else if c >= m - 2 { k } else { 1 + (c - 2) / 4 };
            let states = unpack(&zp, k);
            let iopts = IntegratorOpts::for_params(p);
            for seg in node.saturating_sub(1)..(node + 1).min(k) {
                let end = integrate(p, nodes[seg], states[seg], nodes[seg + 1], &iopts)?;
                for r in 0..4 {
                    let val = end[r] - states[seg + 1][r];
                    jac[(4 * seg + r, c)] = (val - res[4 * seg + r]) / step;
                }
            }
        }
        let dz = linalg::lu_solve(&jac, &res)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..7 {
            let trial: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a - lambda * b).collect();
            if let Ok(r) = shooting_residual(p, &nodes, &unpack(&trial, k)) {
                let n = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if n < norm {
                    z = trial;
                    res = r;
                    norm = n;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm < opts.tol {
        return Ok(ShotOrbit {
            params: *p,
            half_period,
            nodes,
            states: unpack(&z, k),
            mismatch: norm,
            iterations: opts.max_iter,
        });
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: norm })
}

/// Numerical kernel of the full-space collocation Jacobian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub kernel_dim: usize,
    pub is_simple: bool,
    /// The smallest few singular values, ascending.
    pub smallest_singular_values: Vec<f64>,
    pub largest_singular_value: f64,
}

/// Counts singular values of the full Jacobian below `1e-6` times the largest.
pub fn kernel_simplicity(sol: &Solution) -> Result<KernelReport> {
    let jac = stationary::jacobian(&sol.field, &sol.params);
    let s = linalg::singular_values(&jac)?;
    let smax = s[0];
    let kernel_dim = s.iter().filter(|&&v| v < 1e-6 * smax).count();
    let smallest = s.iter().rev().take(4).copied().collect();
    Ok(KernelReport {
        kernel_dim,
        is_simple: kernel_dim == 1,
        smallest_singular_values: smallest,
        largest_singular_value: smax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eps: f64) -> Params {
        Params::new(1.0, 2.0, eps).unwrap()
    }

    #[test]
    fn field_at_origin() {
        assert_eq!(vector_field(&[0.0; 4], &params(0.0)), [0.0; 4]);
        let v = vector_field(&[0.0; 4], &params(0.05));
        assert_eq!(v, [0.0, 0.0, 0.0, 0.05 * 2.0]);
    }

    #[test]
    fn origin_det_is_zeta_squared() {
        for z in [0.3, 1.0, 2.5] {
            assert!((origin_determinant(z) - z * z).abs() < 1e-12);
        }
    }

    #[test]
    fn equilibrium_residual_and_eigenvalues() {
        for eps in [0.01, 0.05] {
            let p = params(eps);
            let eq = equilibrium(&p).unwrap();
            let r = vector_field(&eq.state, &p);
            assert!(r.iter().all(|v| v.abs() < 1e-12));
            assert!(eigenvalue_mismatch(&eq) < 1e-10);
            assert!(eq.alpha > 0.0 && eq.beta > 0.0);
        }
    }

    #[test]
    fn zero_epsilon_is_degenerate() {
        let err = equilibrium(&params(0.0)).unwrap_err();
        assert!(matches!(err, Error::NotSaddleFocus { beta, .. } if beta == 0.0));
        let eq = equilibrium_data(&params(0.0)).unwrap();
        assert_eq!(eq.u_inf, [0.0, 0.0]);
        assert!((eq.nu[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn background_is_small() {
        let eq = equilibrium(&params(0.05)).unwrap();
        assert!(eq.u_inf[0].hypot(eq.u_inf[1]) < 0.2);
    }

    #[test]
    fn integrator_follows_soliton() {
        let p = params(0.0);
        let r2 = 2f64.sqrt();
        let y0 = [r2, 0.0, 0.0, 0.0];
        let x1 = 3.0;
        let exact = |x: f64| [r2 / x.cosh(), 0.0, -r2 * x.tanh() / x.cosh(), 0.0];
        let y = integrate(&p, 0.0, y0, x1, &IntegratorOpts::for_params(&p)).unwrap();
        for i in 0..4 {
            assert!((y[i] - exact(x1)[i]).abs() < 1e-10, "{y:?}");
        }
        let back = integrate(&p, x1, exact(x1), 0.0, &IntegratorOpts::for_params(&p)).unwrap();
        assert!((back[0] - r2).abs() < 1e-10 && back[2].abs() < 1e-10);
    }

    #[test]
    fn equilibrium_is_a_trivial_orbit() {
        let p = params(0.05);
        let eq = steady_state(&p).unwrap();
        let orbit = shoot_symmetric_periodic(10.0, &p, eq).unwrap();
        let u = orbit.initial();
        assert!((u[0] - eq[0]).abs() < 1e-12 && (u[1] - eq[1]).abs() < 1e-12);
    }

    #[test]
    fn escaping_guess_fails() {
        let p = params(0.05);
        assert!(shoot_symmetric_periodic(20.0, &p, [6.0, 0.0]).is_err());
    }

    #[test]
    fn det4_of_permutation() {
        let m = [[0.0, 1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 2.0, 0.0], [0.0, 0.0, 0.0, 3.0]];
        assert!((det4(&m) + 6.0).abs() < 1e-15);
    }
}
