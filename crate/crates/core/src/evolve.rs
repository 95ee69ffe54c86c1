//! Time integration by Strang splitting and the two stability experiments:
//! decay of subharmonic perturbations modulo translation, and diffusive
//! decay of localized perturbations on many copies of the period.
//!
//! The linear sub-flow `u_t = -i(-d u_xx + zeta u) + eps(-u + f)` is exact
//! per Fourier mode (the forcing only enters the zero mode); the nonlinear
//! sub-flow `u_t = i |u|^2 u` is the exact phase rotation
//! `u -> u exp(i |u|^2 t)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::Fft;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{forward_plan, inverse_plan, Field2, Grid};
use crate::model::Params;
use crate::stationary::Solution;

/// Strang-splitting stepper with cached FFT plans and linear propagators.
pub struct Evolver {
    grid: Grid,
    dt: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    half: Vec<Complex64>,
    /// Zero-mode forcing increment over half a step (unnormalized DFT units).
    forcing: Complex64,
    scratch: Vec<Complex64>,
}

impl Evolver {
    pub fn new(grid: Grid, params: Params, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::InvalidParams(format!("time step must be finite and nonzero, got {dt}")));
        }
        let d = params.dispersion();
        let tau = 0.5 * dt;
        let mu = |k: f64| Complex64::new(-params.epsilon, -(d * k * k + params.zeta));
        let half = (0..grid.n).map(|m| (mu(grid.wavenumber(m)) * tau).exp()).collect();
        let mu0 = mu(0.0);
        let forcing = ((mu0 * tau).exp() - 1.0) / mu0 * (params.epsilon * params.f * grid.n as f64);
        let fwd = forward_plan(grid.n);
        let inv = inverse_plan(grid.n);
        let len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Ok(Self { grid, dt, fwd, inv, half, forcing, scratch: vec![Complex64::new(0.0, 0.0); len] })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    fn linear_half(&mut self, z: &mut [Complex64]) {
        self.fwd.process_with_scratch(z, &mut self.scratch);
        for (c, h) in z.iter_mut().zip(&self.half) {
            *c *= h;
        }
        z[0] += self.forcing;
        self.inv.process_with_scratch(z, &mut self.scratch);
        let s = 1.0 / self.grid.n as f64;
        for c in z.iter_mut() {
            *c *= s;
        }
    }

    /// One Strang step on the complex field `u1 + i u2`.
    pub fn step_complex(&mut self, z: &mut [Complex64]) {
        self.linear_half(z);
        for c in z.iter_mut() {
            let phase = c.norm_sqr() * self.dt;
            *c *= Complex64::from_polar(1.0, phase);
        }
        self.linear_half(z);
    }

    pub fn step(&mut self, field: &Field2) -> Field2 {
        let mut z = field.to_complex();
        self.step_complex(&mut z);
        Field2::from_complex(self.grid, &z)
    }

    pub fn advance(&mut self, field: &Field2, steps: usize) -> Field2 {
        let mut z = field.to_complex();
        for _ in 0..steps {
            self.step_complex(&mut z);
        }
        Field2::from_complex(self.grid, &z)
    }
}

/// Single Strang step; see [`Evolver`] for repeated stepping.
pub fn step(field: &Field2, p: &Params, dt: f64) -> Result<Field2> {
    Ok(Evolver::new(field.grid, *p, dt)?.step(field))
}

/// Fixed point of the Strang map near a stationary solution.
///
/// The splitting shifts the stationary state by `O(dt^2)`; experiments that
/// measure small perturbations compare against this discrete fixed point.
/// It is reached by integrating from the stationary solution until the
/// per-step change falls below `tol` (evenness is preserved exactly, so no
/// translation drift occurs for even solutions).
pub fn relax_reference(field: &Field2, p: &Params, dt: f64, tol: f64, max_time: f64) -> Result<Field2> {
    let mut ev = Evolver::new(field.grid, *p, dt)?;
    let mut z = field.to_complex();
    let max_steps = (max_time / dt.abs()).ceil() as usize;
    let chunk = 100;
    let limit = 10.0 * field.sup_norm();
    let mut done = 0;
    let mut change = f64::INFINITY;
    while done < max_steps {
        for _ in 0..chunk {
            ev.step_complex(&mut z);
        }
        done += chunk;
        let before = z.clone();
        ev.step_complex(&mut z);
        done += 1;
        change = z.iter().zip(&before).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if change < tol {
            return Ok(Field2::from_complex(field.grid, &z));
        }
        let sup = z.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if !(sup <= limit) {
            return Err(Error::Blowup { t: done as f64 * dt.abs(), sup_norm: sup });
        }
    }
    Err(Error::RelaxationFailed { time: done as f64 * dt.abs(), change })
}

/// Repeats a single-period field `copies` times.
pub fn tile(field: &Field2, copies: usize) -> Result<Field2> {
    let g = field.grid;
    let big = Grid::new(g.period * copies as f64, g.n * copies)?;
    let n = g.n;
    // Copy j covers big-grid indices j*n .. (j+1)*n; x_{j*n + i} = x_i + (j - (M-1)/2) L
    // only when M is odd, so index from the periodic position instead.
    let mut out = Field2::zeros(big);
    for k in 0..big.n {
        let x = big.x(k);
        let s = ((x - g.x(0)) / g.h()).round() as i64;
        let i = s.rem_euclid(n as i64) as usize;
        out.u1[k] = field.u1[i];
        out.u2[k] = field.u2[i];
    }
    Ok(out)
}

/// Perturbation norms and fitted translates sampled along a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub perturbation_l2: Vec<f64>,
    pub gamma: Vec<f64>,
    pub raw_l2: Vec<f64>,
}

impl EvolutionTrace {
    fn push(&mut self, t: f64, m: &ShiftFit, raw: f64) {
        self.times.push(t);
        self.perturbation_l2.push(m.distance);
        self.gamma.push(m.gamma);
        self.raw_l2.push(raw);
    }

    /// Least-squares slope and `R^2` of `log(perturbation_l2)` against `t` on `[t0, t1]`.
    pub fn log_linear_fit(&self, t0: f64, t1: f64) -> Option<(f64, f64)> {
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.perturbation_l2)
            .filter(|(t, v)| **t >= t0 && **t <= t1 && **v > 0.0)
            .map(|(t, v)| (*t, v.ln()))
            .collect();
        linear_fit(&pts)
    }
}

/// Slope and coefficient of determination of a straight-line fit.
pub fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, r2))
}

/// Best translate `gamma` and the distance it achieves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftFit {
    pub gamma: f64,
    pub distance: f64,
}

/// Minimizes `|| u - u_ref(. + gamma) ||` over `gamma`, where `u_ref` is
/// periodic with period `ref_period` (a divisor of the domain length).
pub struct ShiftSearch {
    grid: Grid,
    ref_period: f64,
    ref_hat: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Resolution of the golden-section refinement.
    pub resolution: f64,
}

impl ShiftSearch {
    pub fn new(reference: &Field2, ref_period: f64) -> Self {
        let grid = reference.grid;
        let fwd = forward_plan(grid.n);
        let inv = inverse_plan(grid.n);
        let mut ref_hat = reference.to_complex();
        fwd.process(&mut ref_hat);
        Self { grid, ref_period, ref_hat, fwd, inv, resolution: 1e-10 * ref_period }
    }

    /// `Re sum conj(u_hat) ref_hat e^{i k gamma}`, proportional to the overlap.
    fn overlap(&self, u_hat: &[Complex64], gamma: f64) -> f64 {
        let g = self.grid;
        let mut acc = 0.0;
        for m in 0..g.n {
            let k = g.wavenumber(m);
            let phase = if g.is_nyquist(m) {
                Complex64::new((k * gamma).cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, k * gamma)
            };
            acc += (u_hat[m].conj() * self.ref_hat[m] * phase).re;
        }
        acc
    }

    fn distance_from_overlap(&self, u_hat: &[Complex64], gamma: f64) -> f64 {
        let n = self.grid.n as f64;
        let uu: f64 = u_hat.iter().map(|c| c.norm_sqr()).sum();
        let rr: f64 = self.ref_hat.iter().map(|c| c.norm_sqr()).sum();
        // The Nyquist phase is a cosine, so shifted references lose a little
        // norm there; accounting for it keeps the distance exact.
        let g = self.grid;
        let ny = g.n / 2;
        let k = g.wavenumber(ny);
        let rr = rr - self.ref_hat[ny].norm_sqr() * (1.0 - (k * gamma).cos().powi(2));
        let d2 = (uu + rr - 2.0 * self.overlap(u_hat, gamma)) / n * g.h();
        d2.max(0.0).sqrt()
    }

    /// Distance at a given shift.
    pub fn distance(&self, u: &Field2, gamma: f64) -> f64 {
        let mut z = u.to_complex();
        self.fwd.process(&mut z);
        self.distance_from_overlap(&z, gamma)
    }

    /// Coarse scan over grid shifts within one reference period, then
    /// golden-section refinement. The result is never worse than `gamma = 0`.
    pub fn best(&self, u: &Field2) -> ShiftFit {
        let g = self.grid;
        let mut z = u.to_complex();
        self.fwd.process(&mut z);
        // Cross-correlation on the grid: c_j = sum conj(u_hat) ref_hat e^{i k x_shift_j}.
        let mut corr: Vec<Complex64> = z.iter().zip(&self.ref_hat).map(|(a, b)| a.conj() * b).collect();
        self.inv.process(&mut corr);
        let h = g.h();
        let span = (self.ref_period / h).round() as usize;
        let mut best_j = 0i64;
        let mut best_val = f64::NEG_INFINITY;
        let half = (span / 2) as i64;
        for j in -half..half.max(1) {
            let idx = j.rem_euclid(g.n as i64) as usize;
            if corr[idx].re > best_val {
                best_val = corr[idx].re;
                best_j = j;
            }
        }
        let center = best_j as f64 * h;
        let f = |gamma: f64| -self.overlap(&z, gamma);
        let (mut a, mut b) = (center - h, center + h);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        while b - a > self.resolution {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = f(d);
            }
        }
        let gamma = 0.5 * (a + b);
        let dist = self.distance_from_overlap(&z, gamma);
        let dist0 = self.distance_from_overlap(&z, 0.0);
        if dist0 <= dist {
            ShiftFit { gamma: 0.0, distance: dist0 }
        } else {
            ShiftFit { gamma, distance: dist }
        }
    }
}

/// Settings shared by the evolution experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveOpts {
    pub dt: f64,
    /// Time between trace samples.
    pub sample_interval: f64,
    /// Compare against the splitting's fixed point instead of the collocation field.
    pub relax_reference: bool,
    pub relax_tol: f64,
    pub relax_max_time: f64,
}

impl Default for EvolveOpts {
    fn default() -> Self {
        Self { dt: 0.01, sample_interval: 0.5, relax_reference: true, relax_tol: 1e-13, relax_max_time: 5000.0 }
    }
}

/// Reference field on one period: the solution itself or the relaxed fixed point.
pub fn reference_field(sol: &Solution, opts: &EvolveOpts) -> Result<Field2> {
    if opts.relax_reference {
        relax_reference(&sol.field, &sol.params, opts.dt, opts.relax_tol, opts.relax_max_time)
    } else {
        Ok(sol.field.clone())
    }
}

/// Evolves `copies` periods of `sol` plus `perturbation` (given on the
/// `copies`-fold grid) and records distances to the translated reference.
pub fn evolve_perturbed(
    sol: &Solution,
    perturbation: &Field2,
    copies: usize,
    t_end: f64,
    opts: &EvolveOpts,
) -> Result<EvolutionTrace> {
    if copies == 0 {
        return Err(Error::InvalidParams("copies must be at least 1".into()));
    }
    let reference = tile(&reference_field(sol, opts)?, copies)?;
    if perturbation.grid != reference.grid {
        return Err(Error::InvalidParams("perturbation grid must be the tiled solution grid".into()));
    }
    let limit = 10.0 * reference.sup_norm();
    let search = ShiftSearch::new(&reference, sol.field.grid.period);
    let mut ev = Evolver::new(reference.grid, sol.params, opts.dt)?;
    let mut z = reference.add(perturbation).to_complex();
    let steps = (t_end / opts.dt).round() as usize;
    let every = ((opts.sample_interval / opts.dt).round() as usize).max(1);
    let mut trace = EvolutionTrace::default();
    for s in 0..=steps {
        if s % every == 0 || s == steps {
            let u = Field2::from_complex(reference.grid, &z);
            let raw = u.sub(&reference).l2_norm();
            trace.push(s as f64 * opts.dt, &search.best(&u), raw);
        }
        if s < steps {
            ev.step_complex(&mut z);
            let sup = z.iter().map(|c| c.norm()).fold(0.0, f64::max);
            if !(sup <= limit) {
                return Err(Error::Blowup { t: (s + 1) as f64 * opts.dt, sup_norm: sup });
            }
        }
    }
    Ok(trace)
}

/// Random smooth perturbation with modes `|m| <= modes` on the grid, scaled
/// to the given L2 norm.
pub fn random_perturbation(grid: Grid, modes: usize, l2: f64, seed: u64) -> Field2 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<(i64, Complex64, Complex64)> = (-(modes as i64)..=modes as i64)
        .map(|m| {
            let mut c = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (m, c(), c())
        })
        .collect();
    let f = Field2::from_fn(grid, |x| {
        let mut v = [0.0, 0.0];
        for (m, a, b) in &coeffs {
            let e = Complex64::from_polar(1.0, 2.0 * PI * *m as f64 * x / grid.period);
            v[0] += (a * e).re;
            v[1] += (b * e).re;
        }
        v
    });
    let norm = f.l2_norm();
    if norm == 0.0 {
        f
    } else {
        f.scale(l2 / norm)
    }
}

/// Outcome of the localized-perturbation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusiveResult {
    /// Exponent of `||u - u_ref||` against `1 + t` over the final decade.
    pub fitted_exponent_raw: f64,
    /// Exponent of `||u - u_ref(. + gamma(., t))||` over the final decade.
    pub fitted_exponent_mod: f64,
    /// Set when the perturbation vanishes and the fits are meaningless.
    pub degenerate: bool,
    pub times: Vec<f64>,
    pub raw_l2: Vec<f64>,
    pub mod_l2: Vec<f64>,
    /// Largest fraction of the perturbation mass found near the domain boundary.
    pub max_tail_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusiveOpts {
    pub evolve: EvolveOpts,
    /// L1 norm of the initial perturbation.
    pub l1_size: f64,
    /// Highest Fourier mode (per period) of the random perturbation.
    pub modes: usize,
    /// Fraction of the perturbation L2 mass allowed within the outer eighth
    /// of the domain at either end.
    pub tail_limit: f64,
    /// Number of trace samples per decade of time.
    pub samples_per_decade: usize,
}

impl Default for DiffusiveOpts {
    fn default() -> Self {
        Self {
            evolve: EvolveOpts { dt: 0.02, ..EvolveOpts::default() },
            l1_size: 1e-3,
            modes: 4,
            tail_limit: 0.01,
            samples_per_decade: 20,
        }
    }
}

/// Localized perturbation supported on the central period: random low modes
/// times a smooth bump, with L1 norm `l1_size`.
pub fn localized_perturbation(period: f64, big: Grid, modes: usize, l1_size: f64, seed: u64) -> Field2 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<(f64, f64, f64, f64)> = (0..=modes)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let f = Field2::from_fn(big, |x| {
        if x.abs() >= 0.5 * period {
            return [0.0, 0.0];
        }
        let bump = (PI * x / period).cos().powi(4);
        let mut v = [0.0, 0.0];
        for (m, (a, b, c, d)) in coeffs.iter().enumerate() {
            let (s, co) = (2.0 * PI * m as f64 * x / period).sin_cos();
            v[0] += a * co + b * s;
            v[1] += c * co + d * s;
        }
        [v[0] * bump, v[1] * bump]
    });
    let l1: f64 = f.u1.iter().zip(&f.u2).map(|(a, b)| a.hypot(*b)).sum::<f64>() * big.h();
    if l1 == 0.0 {
        f
    } else {
        f.scale(l1_size / l1)
    }
}

/// Per-copy translates, interpolated to a smooth `gamma(x)`, and the distance
/// `|| u - u_ref(. + gamma(.)) ||`.
struct ModulatedDistance {
    period_grid: Grid,
    /// Period index of the first point of the tiled grid.
    offset: usize,
    copies: usize,
    ref_interp: crate::grid::Interpolant,
    ref_hat: Vec<Complex64>,
}

impl ModulatedDistance {
    fn new(reference: &Field2, big: Grid, copies: usize) -> Self {
        let mut ref_hat = reference.to_complex();
        forward_plan(reference.grid.n).process(&mut ref_hat);
        let g = reference.grid;
        let offset = (((big.x(0) - g.x(0)) / g.h()).round() as i64).rem_euclid(g.n as i64) as usize;
        Self {
            period_grid: g,
            offset,
            copies,
            ref_interp: reference.interpolant(),
            ref_hat,
        }
    }

    /// Reference on one period translated by `gamma`: `u_ref(x + gamma)`.
    fn shifted(&self, gamma: f64) -> Vec<Complex64> {
        let g = self.period_grid;
        let mut z: Vec<Complex64> = self
            .ref_hat
            .iter()
            .enumerate()
            .map(|(m, c)| {
                let k = g.wavenumber(m);
                if g.is_nyquist(m) {
                    c * (k * gamma).cos()
                } else {
                    c * Complex64::from_polar(1.0, k * gamma)
                }
            })
            .collect();
        inverse_plan(g.n).process(&mut z);
        let s = 1.0 / g.n as f64;
        z.iter().map(|c| c * s).collect()
    }

    fn copy_distance(&self, u: &[Complex64], copy: usize, gamma: f64) -> f64 {
        let n = self.period_grid.n;
        let r = self.shifted(gamma);
        let off = copy * n;
        (0..n).map(|i| (u[off + i] - r[(off + i + self.offset) % n]).norm_sqr()).sum()
    }

    fn gammas(&self, u: &[Complex64]) -> Vec<f64> {
        let h = self.period_grid.h();
        (0..self.copies)
            .map(|c| {
                let f = |g: f64| self.copy_distance(u, c, g);
                let (mut a, mut b) = (-2.0 * h, 2.0 * h);
                let r = 0.5 * (5f64.sqrt() - 1.0);
                let mut x1 = b - r * (b - a);
                let mut x2 = a + r * (b - a);
                let (mut f1, mut f2) = (f(x1), f(x2));
                while b - a > 1e-6 * h {
                    if f1 < f2 {
                        b = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = b - r * (b - a);
                        f1 = f(x1);
                    } else {
                        a = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = a + r * (b - a);
                        f2 = f(x2);
                    }
                }
                0.5 * (a + b)
            })
            .collect()
    }

    /// Returns the modulated distance using a periodic Catmull-Rom
    /// interpolation of the per-copy translates between copy centres.
    fn distance(&self, big: Grid, u: &[Complex64]) -> f64 {
        let gam = self.gammas(u);
        let m = self.copies;
        let n = self.period_grid.n;
        let mut acc = 0.0;
        for (k, uk) in u.iter().enumerate() {
            // Position within the copy sequence measured in periods from the
            // centre of copy 0.
            let s = (k as f64 - 0.5 * (n as f64 - 1.0)) / n as f64;
            let i = s.floor() as i64;
            let t = s - i as f64;
            let at = |j: i64| gam[j.rem_euclid(m as i64) as usize];
            let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
            let g = 0.5
                * (2.0 * p1
                    + (-p0 + p2) * t
                    + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t
                    + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t * t * t);
            let x = big.x(k);
            let v = self.ref_interp.eval(x + g);
            acc += (uk - Complex64::new(v[0], v[1])).norm_sqr();
        }
        (acc * big.h()).sqrt()
    }
}

/// Localized perturbation on `copies` periods; fits the algebraic decay
/// exponents of the raw and the modulated distance over the final decade.
pub fn diffusive_experiment(
    sol: &Solution,
    copies: usize,
    seed: u64,
    t_end: f64,
    opts: &DiffusiveOpts,
) -> Result<DiffusiveResult> {
    if copies < 16 {
        return Err(Error::InvalidParams(format!("diffusive experiment needs at least 16 copies, got {copies}")));
    }
    let eo = opts.evolve;
    let period_ref = reference_field(sol, &eo)?;
    let reference = tile(&period_ref, copies)?;
    let big = reference.grid;
    let pert = if opts.l1_size == 0.0 {
        Field2::zeros(big)
    } else {
        localized_perturbation(sol.field.grid.period, big, opts.modes, opts.l1_size, seed)
    };
    let md = ModulatedDistance::new(&period_ref, big, copies);
    let mut ev = Evolver::new(big, sol.params, eo.dt)?;
    let mut z = reference.add(&pert).to_complex();
    let rz = reference.to_complex();
    let steps = (t_end / eo.dt).round() as usize;
    // Log-spaced samples in 1 + t.
    let decades = (1.0 + t_end).log10();
    let count = ((decades * opts.samples_per_decade as f64).ceil() as usize).max(2);
    let mut sample_steps: Vec<usize> = (0..=count)
        .map(|i| {
            let t = 10f64.powf(decades * i as f64 / count as f64) - 1.0;
            (t / eo.dt).round() as usize
        })
        .collect();
    sample_steps.dedup();
    let limit = 10.0 * reference.sup_norm();
    // Differences below this level are round-off and count as zero.
    let floor = 1e-10 * reference.l2_norm();
    let edge = big.n / 8;
    let (mut times, mut raw_l2, mut mod_l2) = (Vec::new(), Vec::new(), Vec::new());
    let mut max_tail: f64 = 0.0;
    let mut next = 0;
    for s in 0..=steps {
        if next < sample_steps.len() && s == sample_steps[next] {
            next += 1;
            let diff: Vec<f64> = z.iter().zip(&rz).map(|(a, b)| (a - b).norm_sqr()).collect();
            let total: f64 = diff.iter().sum();
            let raw = (total * big.h()).sqrt();
            let resolved = raw > floor;
            if resolved {
                let tail: f64 = diff[..edge].iter().chain(&diff[big.n - edge..]).sum::<f64>() / total;
                max_tail = max_tail.max(tail);
                if tail > opts.tail_limit {
                    return Err(Error::DomainTooSmall { t: s as f64 * eo.dt, tail_fraction: tail });
                }
            }
            times.push(s as f64 * eo.dt);
            raw_l2.push(if resolved { raw } else { 0.0 });
            mod_l2.push(if resolved { md.distance(big, &z) } else { 0.0 });
        }
        if s < steps {
            ev.step_complex(&mut z);
            let sup = z.iter().map(|c| c.norm()).fold(0.0, f64::max);
            if !(sup <= limit) {
                return Err(Error::Blowup { t: (s + 1) as f64 * eo.dt, sup_norm: sup });
            }
        }
    }
    let fit = |vals: &[f64]| {
        let pts: Vec<(f64, f64)> = times
            .iter()
            .zip(vals)
            .filter(|(t, v)| **t >= 0.1 * t_end && **v > 0.0)
            .map(|(t, v)| ((1.0 + t).ln(), v.ln()))
            .collect();
        linear_fit(&pts).map(|(s, _)| s)
    };
    let (er, em) = (fit(&raw_l2), fit(&mod_l2));
    let degenerate = er.is_none() || em.is_none();
    Ok(DiffusiveResult {
        fitted_exponent_raw: er.unwrap_or(f64::NAN),
        fitted_exponent_mod: em.unwrap_or(f64::NAN),
        degenerate,
        times,
        raw_l2,
        mod_l2,
        max_tail_fraction: max_tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_mode_phase_is_exact() {
        let g = Grid::new(2.0 * PI, 32).unwrap();
        let p = Params::new(1.0, 1.0, 0.0).unwrap();
        let amp = 1e-9;
        let k = 3.0;
        let f = Field2::from_fn(g, |x| [amp * (k * x).cos(), amp * (k * x).sin()]);
        let dt = 0.01;
        let mut ev = Evolver::new(g, p, dt).unwrap();
        let out = ev.advance(&f, 100);
        let t = 1.0;
        let w = k * k + 1.0;
        let expected = Field2::from_fn(g, |x| {
            let ph = k * x - w * t;
            [amp * ph.cos(), amp * ph.sin()]
        });
        assert!(out.sup_distance(&expected) < 1e-12 * 1e3 * amp);
    }

    #[test]
    fn forward_backward_is_identity() {
        let g = Grid::new(20.0, 128).unwrap();
        let p = Params::new(1.0, 2.0, 0.0).unwrap();
        let f = Field2::from_fn(g, |x| [1.2 / x.cosh(), 0.3 * (-x * x).exp()]);
        let mut fwd = Evolver::new(g, p, 0.01).unwrap();
        let mut bwd = Evolver::new(g, p, -0.01).unwrap();
        let back = bwd.step(&fwd.step(&f));
        assert!(back.sup_distance(&f) < 1e-10);
    }

    #[test]
    fn tiling_repeats_the_period() {
        let g = Grid::new(4.0, 16).unwrap();
        let f = Field2::from_fn(g, |x| [(PI * x / 2.0).cos(), (PI * x / 2.0).sin()]);
        let t = tile(&f, 3).unwrap();
        let expected = Field2::from_fn(t.grid, |x| [(PI * x / 2.0).cos(), (PI * x / 2.0).sin()]);
        assert!(t.sup_distance(&expected) < 1e-13);
    }

    #[test]
    fn shift_search_finds_translate() {
        let g = Grid::new(30.0, 256).unwrap();
        let base = Field2::from_fn(g, |x| [1.0 / x.cosh(), 0.2 / (2.0 * x).cosh()]);
        let moved = Field2::from_fn(g, |x| [1.0 / (x + 0.1234).cosh(), 0.2 / (2.0 * (x + 0.1234)).cosh()]);
        let s = ShiftSearch::new(&base, g.period);
        let fit = s.best(&moved);
        assert!((fit.gamma - 0.1234).abs() < 1e-6, "{fit:?}");
        assert!(fit.distance < 1e-6, "{fit:?}");
    }

    #[test]
    fn linear_fit_of_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 - 0.5 * i as f64)).collect();
        let (s, r2) = linear_fit(&pts).unwrap();
        assert!((s + 0.5).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }
}
