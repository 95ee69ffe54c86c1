//! Bloch eigenanalysis of stationary periodic solutions.
//!
//! The linearization about `u` is `J L(u) - eps` with
//! `L(u) = -d_x^2 + zeta - M(u)`. Its Bloch operators on one period replace
//! `d_x` by `d_x + i q` with `q = xi / L`, so that the union of the Bloch
//! spectra over `xi in [-pi, pi)` is the spectrum on the whole line.

use std::f64::consts::PI;

use faer::{c64, Mat};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, Equilibrium};
use crate::error::{Error, Result};
use crate::grid::{Field2, Grid};
use crate::linalg;
use crate::model::Params;
use crate::stationary::Solution;

/// How the Bloch parameter enters the shifted derivative `d_x + i q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BlochShift {
    /// `q = xi / L`; the Bloch spectra tile the whole-line spectrum.
    #[default]
    PerPeriod,
    /// `q = xi * L`, kept for comparison only.
    Literal,
}

impl BlochShift {
    pub fn wavenumber(self, xi: f64, period: f64) -> f64 {
        match self {
            BlochShift::PerPeriod => xi / period,
            BlochShift::Literal => xi * period,
        }
    }
}

/// Hermitian part `L_xi(u) = -(d_x + i q)^2 + zeta - M(u)` as a `2n x 2n` matrix.
pub fn bloch_selfadjoint(field: &Field2, p: &Params, q: f64) -> Mat<c64> {
    let n = field.len();
    let col = field.grid.shifted_laplacian_column(q);
    let mut m = Mat::<c64>::zeros(2 * n, 2 * n);
    for j in 0..n {
        for l in 0..n {
            let mut v = col[(j + n - l) % n];
            if j == l {
                v += p.zeta;
            }
            m[(j, l)] = v;
            m[(n + j, n + l)] = v;
        }
        let (a, b) = (field.u1[j], field.u2[j]);
        m[(j, j)] -= 3.0 * a * a + b * b;
        m[(n + j, n + j)] -= a * a + 3.0 * b * b;
        m[(j, n + j)] -= 2.0 * a * b;
        m[(n + j, j)] -= 2.0 * a * b;
    }
    m
}

/// `J L_xi(u) - eps` for the Bloch wavenumber `q`.
pub fn bloch_matrix_q(field: &Field2, p: &Params, q: f64) -> Mat<c64> {
    let l = bloch_selfadjoint(field, p, q);
    let n = field.len();
    let e = Complex64::new(p.epsilon, 0.0);
    Mat::from_fn(2 * n, 2 * n, |r, c| {
        let v = if r < n { l[(n + r, c)] } else { -l[(r - n, c)] };
        if r == c {
            v - e
        } else {
            v
        }
    })
}

/// Bloch matrix `J L_xi(u) - eps` with the default shift `q = xi / L`.
pub fn bloch_matrix(sol: &Solution, xi: f64) -> Mat<c64> {
    let q = BlochShift::PerPeriod.wavenumber(xi, sol.field.grid.period);
    bloch_matrix_q(&sol.field, &sol.params, q)
}

/// Eigenvalues of one Bloch operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochSlice {
    pub xi: f64,
    pub eigenvalues: Vec<Complex64>,
}

/// One point `(xi, lambda_0(xi))` of the tracked critical curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub xi: f64,
    pub lambda: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictKind {
    DiffusivelyStable,
    Unstable,
    Indeterminate,
}

/// Diffusive spectral stability verdict with the measured constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub kind: VerdictKind,
    /// `min -Re(lambda) / xi^2` over slices with `|xi| >= xi_exclude`.
    pub theta_bound: f64,
    /// `-max Re` over the spectrum without the critical curve.
    pub gap: f64,
    pub zero_simple: bool,
    /// Largest real part over all slices, excluding `lambda_0(0)`.
    pub max_unstable_re: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochSweep {
    pub period: f64,
    pub epsilon: f64,
    pub slices: Vec<BlochSlice>,
    pub critical_curve: Vec<CriticalPoint>,
    pub verdict: StabilityVerdict,
}

impl BlochSweep {
    /// Least-squares amplitude `A` in `lambda_0(xi) ~ A (cos xi - 1)`.
    pub fn curve_amplitude(&self) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for pt in &self.critical_curve {
            let c = pt.xi.cos() - 1.0;
            num += pt.lambda.re * c;
            den += c * c;
        }
        (den > 0.0).then(|| num / den)
    }

    /// All eigenvalues of all slices.
    pub fn all_eigenvalues(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.slices.iter().flat_map(|s| s.eigenvalues.iter().copied())
    }
}

/// Sweep settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOpts {
    pub shift: BlochShift,
    /// Dead-band around zero for sign decisions.
    pub deadband: f64,
    /// Largest modulus accepted for `lambda_0(0)`.
    pub critical_radius: f64,
    /// Slices with `|xi|` below this are excluded from the `theta` estimate.
    pub xi_exclude: f64,
    /// Minimal ratio between the second-nearest and nearest candidate.
    pub track_ratio: f64,
}

impl Default for SweepOpts {
    fn default() -> Self {
        Self { shift: BlochShift::PerPeriod, deadband: 1e-9, critical_radius: 1e-3, xi_exclude: 0.05, track_ratio: 2.0 }
    }
}

/// Uniform grid `xi_j = -pi + 2 pi j / count`; contains 0 for even `count`.
pub fn xi_grid(count: usize) -> Vec<f64> {
    (0..count).map(|j| (2.0 * j as f64 - count as f64) * PI / count as f64).collect()
}

/// Eigenvalues of a single slice; `xi = 0` uses the real solver.
pub fn slice_eigenvalues(field: &Field2, p: &Params, xi: f64, shift: BlochShift) -> Result<Vec<Complex64>> {
    if xi == 0.0 {
        let jac = crate::stationary::jacobian(field, p);
        linalg::eigenvalues_real(&jac)
    } else {
        let q = shift.wavenumber(xi, field.grid.period);
        linalg::eigenvalues_complex(&bloch_matrix_q(field, p, q))
    }
}

/// Dense eigensolves over `xi_grid`, critical-curve tracking and verdict.
pub fn sweep(sol: &Solution, xi_grid: &[f64], opts: &SweepOpts) -> Result<BlochSweep> {
    let zero = xi_grid
        .iter()
        .position(|&x| x == 0.0)
        .ok_or_else(|| Error::InvalidParams("the xi grid must contain 0".into()))?;
    if xi_grid.iter().any(|&x| !(-PI..PI).contains(&x)) {
        return Err(Error::InvalidParams("xi values must lie in [-pi, pi)".into()));
    }
    let slices: Vec<BlochSlice> = xi_grid
        .par_iter()
        .map(|&xi| {
            slice_eigenvalues(&sol.field, &sol.params, xi, opts.shift).map(|eigenvalues| BlochSlice { xi, eigenvalues })
        })
        .collect::<Result<_>>()?;
    let tracked = track_critical(&slices, zero, opts)?;
    let verdict = assess(&slices, zero, tracked.as_deref(), opts);
    let critical_curve = match &tracked {
        Some(idx) => {
            let mut pts: Vec<CriticalPoint> = slices
                .iter()
                .zip(idx)
                .map(|(s, &i)| CriticalPoint { xi: s.xi, lambda: s.eigenvalues[i] })
                .collect();
            pts.sort_by(|a, b| a.xi.total_cmp(&b.xi));
            pts
        }
        None => Vec::new(),
    };
    Ok(BlochSweep { period: sol.field.grid.period, epsilon: sol.params.epsilon, slices, critical_curve, verdict })
}

fn smallest_two(values: &[Complex64], target: Complex64) -> (usize, f64, f64) {
    let (mut best, mut d1, mut d2) = (0, f64::INFINITY, f64::INFINITY);
    for (i, v) in values.iter().enumerate() {
        let d = (v - target).norm();
        if d < d1 {
            d2 = d1;
            d1 = d;
            best = i;
        } else if d < d2 {
            d2 = d;
        }
    }
    (best, d1, d2)
}

/// Index of the critical eigenvalue in every slice, or `None` when no
/// eigenvalue lies within `critical_radius` of 0 at `xi = 0`.
fn track_critical(slices: &[BlochSlice], zero: usize, opts: &SweepOpts) -> Result<Option<Vec<usize>>> {
    let origin = Complex64::new(0.0, 0.0);
    let (i0, d0, _) = smallest_two(&slices[zero].eigenvalues, origin);
    if d0 > opts.critical_radius {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..slices.len()).collect();
    order.sort_by(|&a, &b| slices[a].xi.total_cmp(&slices[b].xi));
    let pos = order.iter().position(|&i| i == zero).unwrap();
    let mut idx = vec![usize::MAX; slices.len()];
    idx[zero] = i0;
    let upward: Vec<usize> = order[pos + 1..].to_vec();
    let downward: Vec<usize> = order[..pos].iter().rev().copied().collect();
    for path in [upward, downward] {
        let mut prev = slices[zero].eigenvalues[i0];
        for s in path {
            let (best, d1, d2) = smallest_two(&slices[s].eigenvalues, prev);
            // Distances at round-off level cannot be ambiguous.
            if d2 < opts.track_ratio * d1 && d1 > 1e-12 {
                return Err(Error::TrackingLost { xi: slices[s].xi, ratio: d2 / d1 });
            }
            idx[s] = best;
            prev = slices[s].eigenvalues[best];
        }
    }
    Ok(Some(idx))
}

fn assess(slices: &[BlochSlice], zero: usize, tracked: Option<&[usize]>, opts: &SweepOpts) -> StabilityVerdict {
    let mut max_unstable_re = f64::NEG_INFINITY;
    let mut max_noncritical = f64::NEG_INFINITY;
    let mut theta = f64::INFINITY;
    let mut resolved = true;
    for (s, slice) in slices.iter().enumerate() {
        let crit = tracked.map(|t| t[s]);
        let far = slice.xi.abs() >= opts.xi_exclude;
        for (i, v) in slice.eigenvalues.iter().enumerate() {
            let is_crit = crit == Some(i);
            if !(is_crit && s == zero) {
                max_unstable_re = max_unstable_re.max(v.re);
            }
            if !is_crit {
                max_noncritical = max_noncritical.max(v.re);
            } else if far && v.re >= -opts.deadband {
                resolved = false;
            }
            if far {
                theta = theta.min(-v.re / (slice.xi * slice.xi));
            }
        }
    }
    if !theta.is_finite() {
        theta = f64::NAN;
    }
    let gap = -max_noncritical;
    let (zero_simple, mut note) = match tracked {
        Some(t) => {
            let vals = &slices[zero].eigenvalues;
            let lam0 = vals[t[zero]].norm();
            let second = vals
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != t[zero])
                .map(|(_, v)| v.norm())
                .fold(f64::INFINITY, f64::min);
            (lam0 < 1e-8 && second > 100.0 * opts.deadband, None)
        }
        None => (false, Some("no eigenvalue near 0 at xi = 0 (no translation mode)".to_string())),
    };
    let kind = if max_unstable_re > opts.deadband {
        VerdictKind::Unstable
    } else if zero_simple && gap > 0.0 && theta > 0.0 && resolved {
        VerdictKind::DiffusivelyStable
    } else {
        if tracked.is_some() && !resolved && note.is_none() {
            note = Some("critical curve is below the dead-band; sign not resolved".to_string());
        }
        VerdictKind::Indeterminate
    };
    StabilityVerdict { kind, theta_bound: theta, gap, zero_simple, max_unstable_re, note }
}

/// `-max Re lambda` over the Bloch slices `xi = 2 pi j / copies` without the
/// translation eigenvalue at `xi = 0`: the decay rate of perturbations of
/// `copies` periods modulo translation.
pub fn subharmonic_gap(sol: &Solution, copies: usize) -> Result<f64> {
    if copies == 0 {
        return Err(Error::InvalidParams("copies must be at least 1".into()));
    }
    let mut worst = f64::NEG_INFINITY;
    for j in 0..copies {
        let mut xi = 2.0 * PI * j as f64 / copies as f64;
        if xi >= PI {
            xi -= 2.0 * PI;
        }
        let vals = slice_eigenvalues(&sol.field, &sol.params, xi, BlochShift::PerPeriod)?;
        let skip = (j == 0).then(|| smallest_two(&vals, Complex64::new(0.0, 0.0)).0);
        for (i, v) in vals.iter().enumerate() {
            if Some(i) != skip {
                worst = worst.max(v.re);
            }
        }
    }
    Ok(-worst)
}

/// Symmetric Hausdorff distance between two finite point sets.
pub fn spectrum_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let one_sided = |x: &[Complex64], y: &[Complex64]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}

/// Angle between the eigenvector of the eigenvalue closest to 0 at `xi = 0`
/// and the discretized derivative `u'`.
pub fn translation_alignment(sol: &Solution) -> Result<f64> {
    let n = sol.field.len();
    let jac = crate::stationary::jacobian(&sol.field, &sol.params);
    let m = Mat::from_fn(2 * n, 2 * n, |r, c| Complex64::new(jac[(r, c)], 0.0));
    let (vals, vecs) = linalg::eigen_complex(&m)?;
    let (i0, _, _) = smallest_two(&vals, Complex64::new(0.0, 0.0));
    let du = sol.field.derivative(1)?.stacked();
    let wn = du.iter().map(|v| v * v).sum::<f64>().sqrt();
    let v: Vec<Complex64> = (0..2 * n).map(|r| vecs[(r, i0)]).collect();
    let vn = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let proj: Complex64 = v.iter().zip(&du).map(|(z, w)| z.conj() * w).sum::<Complex64>() / (vn * wn);
    // Component of u'/|u'| orthogonal to span(v).
    let perp = v
        .iter()
        .zip(&du)
        .map(|(z, w)| (w / wn - z / vn * proj).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(perp.atan2(proj.norm()))
}

/// Eigenvalues in a small ball around the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallEigReport {
    pub delta0: f64,
    pub eigenvalues: Vec<Complex64>,
    pub n_stable: usize,
    pub n_unstable: usize,
    pub zero_is_simple: bool,
    /// Largest relative change of the nonzero small eigenvalues under
    /// doubling of the window, when that check was run.
    pub window_change: Option<f64>,
}

/// Small eigenvalues of the `xi = 0` operator inside `B_delta0(0)`.
pub fn small_eigs(sol: &Solution, delta0: f64) -> Result<SmallEigReport> {
    let vals = slice_eigenvalues(&sol.field, &sol.params, 0.0, BlochShift::PerPeriod)?;
    Ok(classify_small(&vals, delta0, 1e-9))
}

fn classify_small(vals: &[Complex64], delta0: f64, deadband: f64) -> SmallEigReport {
    let mut inside: Vec<Complex64> = vals.iter().copied().filter(|v| v.norm() < delta0).collect();
    inside.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let zero_is_simple = !inside.is_empty()
        && inside[0].norm() < 1e-8
        && inside.get(1).map_or(true, |v| v.norm() > 100.0 * deadband);
    let rest = if zero_is_simple { &inside[1..] } else { &inside[..] };
    let n_stable = rest.iter().filter(|v| v.re < -deadband).count();
    let n_unstable = rest.iter().filter(|v| v.re > deadband).count();
    SmallEigReport { delta0, eigenvalues: inside, n_stable, n_unstable, zero_is_simple, window_change: None }
}

/// [`small_eigs`] plus the window-doubling test: the solution is continued to
/// a window twice as long (same resolution) and the nonzero small
/// eigenvalues must move by less than 10%.
pub fn small_eigs_checked(sol: &Solution, delta0: f64, newton: &crate::stationary::NewtonOpts) -> Result<SmallEigReport> {
    let mut report = small_eigs(sol, delta0)?;
    let g = sol.field.grid;
    let big = Grid::new(2.0 * g.period, 2 * g.n)?;
    let seed = crate::stationary::transfer_to_grid(&sol.field, big);
    let wide = crate::stationary::newton_solve(&seed, &sol.params, newton)?;
    let other = small_eigs(&wide, delta0)?;
    let a: Vec<Complex64> = report.eigenvalues.iter().copied().filter(|v| v.norm() >= 1e-8).collect();
    let b: Vec<Complex64> = other.eigenvalues.iter().copied().filter(|v| v.norm() >= 1e-8).collect();
    let change = if a.len() != b.len() {
        f64::INFINITY
    } else {
        a.iter()
            .map(|p| b.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min) / p.norm())
            .fold(0.0, f64::max)
    };
    report.window_change = Some(change);
    if !(change < 0.1) {
        return Err(Error::WindowTooSmall { relative_change: change });
    }
    Ok(report)
}

/// A-priori bound on the real parts of unstable eigenvalues: `eta1 = |zeta| + 4 rho^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriBox {
    pub rho: f64,
    pub eta1: f64,
    pub eta2: Option<f64>,
}

pub fn apriori_box(sol: &Solution) -> AprioriBox {
    apriori_box_for(&sol.field, &sol.params)
}

pub fn apriori_box_for(field: &Field2, p: &Params) -> AprioriBox {
    let rho = field.sup_norm();
    AprioriBox { rho, eta1: p.zeta.abs() + 4.0 * rho * rho, eta2: None }
}

impl AprioriBox {
    /// Eigenvalues of `J L - eps` with `Re >= -eps/2` and `|Re| >= eta1`.
    pub fn violations(&self, epsilon: f64, eigenvalues: impl IntoIterator<Item = Complex64>) -> Vec<Complex64> {
        eigenvalues
            .into_iter()
            .filter(|v| v.re >= -0.5 * epsilon && v.re.abs() >= self.eta1)
            .collect()
    }
}

/// Result of the constant-state symbol check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssentialLine {
    pub max_deviation: f64,
    /// Some wavenumber had `det(S(k)) <= 0`, so the eigenvalues left the line.
    pub out_of_regime: bool,
}

/// Eigenvalues of the 2x2 symbol `J S(k) - eps` with
/// `S(k) = k^2 + zeta - M(u)`, by the quadratic formula.
pub fn symbol_eigenvalues(p: &Params, u: [f64; 2], k: f64) -> [Complex64; 2] {
    let (a, b) = (u[0], u[1]);
    let s11 = k * k + p.zeta - (3.0 * a * a + b * b);
    let s22 = k * k + p.zeta - (a * a + 3.0 * b * b);
    let s12 = -2.0 * a * b;
    // J S = [[s12, s22], [-s11, -s12]]
    let (m11, m12, m21, m22) = (s12, s22, -s11, -s12);
    let tr = m11 + m22;
    let det = m11 * m22 - m12 * m21;
    let disc = Complex64::new(0.25 * tr * tr - det, 0.0).sqrt();
    let e = Complex64::new(p.epsilon, 0.0);
    [0.5 * tr + disc - e, 0.5 * tr - disc - e]
}

/// `max_k |Re lambda(k) + eps|` at the background state `u_inf` of `p`.
pub fn essential_line_check(p: &Params, k_grid: &[f64]) -> Result<EssentialLine> {
    let u = dynamics::steady_state(p)?;
    Ok(essential_line_check_at(p, u, k_grid))
}

/// As [`essential_line_check`] for an explicitly supplied constant state.
pub fn essential_line_check_at(p: &Params, u: [f64; 2], k_grid: &[f64]) -> EssentialLine {
    let (a, b) = (u[0], u[1]);
    let mut max_deviation: f64 = 0.0;
    let mut out_of_regime = false;
    for &k in k_grid {
        let s11 = k * k + p.zeta - (3.0 * a * a + b * b);
        let s22 = k * k + p.zeta - (a * a + 3.0 * b * b);
        if s11 * s22 - 4.0 * a * a * b * b <= 0.0 {
            out_of_regime = true;
        }
        for v in symbol_eigenvalues(p, u, k) {
            max_deviation = max_deviation.max((v.re + p.epsilon).abs());
        }
    }
    EssentialLine { max_deviation, out_of_regime }
}

/// Which length the fit variable `T` denotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CurveVariable {
    /// `T = L / 2`: `exp(-2 alpha T)` is the tail overlap of neighbouring pulses.
    #[default]
    HalfPeriod,
    /// `T = L`.
    Period,
}

impl CurveVariable {
    pub fn of_period(self, period: f64) -> f64 {
        match self {
            CurveVariable::HalfPeriod => 0.5 * period,
            CurveVariable::Period => period,
        }
    }
}

/// Parameters of `lambda_0(xi) ~ a (cos xi - 1) exp(-2 alpha T) sin(2 beta T + b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rms_relative: f64,
    pub variable: CurveVariable,
}

impl CurveFit {
    pub fn eval(&self, xi: f64, t: f64) -> f64 {
        self.a * (xi.cos() - 1.0) * (-2.0 * self.alpha * t).exp() * (2.0 * self.beta * t + self.b).sin()
    }

    /// `sin(2 beta T + b)` for the period `L`.
    pub fn phase_sine(&self, period: f64) -> f64 {
        let t = self.variable.of_period(period);
        (2.0 * self.beta * t + self.b).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOpts {
    pub variable: CurveVariable,
    /// Refine `alpha` and `beta` after the linear fit of `(a, b)`.
    pub refine_rates: bool,
}

impl Default for FitOpts {
    fn default() -> Self {
        Self { variable: CurveVariable::HalfPeriod, refine_rates: true }
    }
}

/// Samples `(T, xi, lambda_0)` used by the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub t: f64,
    pub xi: f64,
    pub lambda: f64,
}

pub fn curve_samples(sweeps: &[BlochSweep], variable: CurveVariable) -> Vec<CurveSample> {
    sweeps
        .iter()
        .flat_map(|s| {
            let t = variable.of_period(s.period);
            s.critical_curve
                .iter()
                .filter(|p| p.xi != 0.0)
                .map(move |p| CurveSample { t, xi: p.xi, lambda: p.lambda.re })
        })
        .collect()
}

/// Fits the critical-curve model to tracked curves of several periods.
pub fn fit_critical_curve(sweeps: &[BlochSweep], eq: &Equilibrium, opts: &FitOpts) -> Result<CurveFit> {
    let samples = curve_samples(sweeps, opts.variable);
    fit_samples(&samples, eq.alpha, eq.beta, opts)
}

/// Fit on raw samples with rate seeds `(alpha0, beta0)`.
pub fn fit_samples(samples: &[CurveSample], alpha0: f64, beta0: f64, opts: &FitOpts) -> Result<CurveFit> {
    let mut ts: Vec<f64> = samples.iter().map(|s| s.t).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    if ts.len() < 4 {
        return Err(Error::FitIllConditioned(format!("need at least 4 periods, got {}", ts.len())));
    }
    // Weights fixed at the seed rate so that the refinement cannot trade
    // amplitude for decay.
    let w: Vec<f64> = samples.iter().map(|s| (2.0 * alpha0 * s.t).exp()).collect();
    // Linear stage: lambda e^{2 alpha T} = (cos xi - 1)(c sin(2 beta T) + s cos(2 beta T)).
    let (c, s) = linear_amplitudes(samples, &w, alpha0, beta0)?;
    let mut theta = [c.hypot(s), s.atan2(c), alpha0, beta0];
    let informative = ts.iter().filter(|&&t| (2.0 * beta0 * t + theta[1]).sin().abs() > 0.2).count();
    if informative == 0 {
        return Err(Error::FitIllConditioned("all periods sit near zeros of the sine".into()));
    }
    if opts.refine_rates {
        theta = levenberg_marquardt(samples, &w, theta)?;
    }
    let [mut a, mut b, alpha, beta] = theta;
    if a < 0.0 {
        a = -a;
        b += PI;
    }
    b = (b + PI).rem_euclid(2.0 * PI) - PI;
    let fit = CurveFit { a, b, alpha, beta, rms_relative: 0.0, variable: opts.variable };
    let rms = (samples
        .iter()
        .map(|p| {
            let scale = a * (-2.0 * alpha * p.t).exp();
            ((p.lambda - fit.eval(p.xi, p.t)) / scale).powi(2)
        })
        .sum::<f64>()
        / samples.len() as f64)
        .sqrt();
    Ok(CurveFit { rms_relative: rms, ..fit })
}

fn linear_amplitudes(samples: &[CurveSample], w: &[f64], alpha: f64, beta: f64) -> Result<(f64, f64)> {
    let _ = alpha;
    let (mut a11, mut a12, mut a22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, &wi) in samples.iter().zip(w) {
        let g = p.xi.cos() - 1.0;
        let x1 = g * (2.0 * beta * p.t).sin();
        let x2 = g * (2.0 * beta * p.t).cos();
        let y = p.lambda * wi;
        a11 += x1 * x1;
        a12 += x1 * x2;
        a22 += x2 * x2;
        r1 += x1 * y;
        r2 += x2 * y;
    }
    let det = a11 * a22 - a12 * a12;
    if !(det.abs() > 1e-12 * (a11 * a22).max(f64::MIN_POSITIVE)) {
        return Err(Error::FitIllConditioned("amplitude design matrix is singular".into()));
    }
    Ok(((a22 * r1 - a12 * r2) / det, (a11 * r2 - a12 * r1) / det))
}

fn model_residuals(samples: &[CurveSample], w: &[f64], th: &[f64; 4]) -> Vec<f64> {
    samples
        .iter()
        .zip(w)
        .map(|(p, wi)| {
            let m = th[0] * (p.xi.cos() - 1.0) * (-2.0 * th[2] * p.t).exp() * (2.0 * th[3] * p.t + th[1]).sin();
            (p.lambda - m) * wi
        })
        .collect()
}

fn levenberg_marquardt(samples: &[CurveSample], w: &[f64], mut th: [f64; 4]) -> Result<[f64; 4]> {
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut r = model_residuals(samples, w, &th);
    let mut c = cost(&r);
    let mut mu = 1e-3;
    for _ in 0..200 {
        // Analytic Jacobian of the residual (with a minus sign).
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for ((p, wi), ri) in samples.iter().zip(w).zip(&r) {
            let g = p.xi.cos() - 1.0;
            let e = (-2.0 * th[2] * p.t).exp();
            let ph = 2.0 * th[3] * p.t + th[1];
            let (sn, cs) = ph.sin_cos();
            let d = [
                g * e * sn,
                th[0] * g * e * cs,
                -2.0 * p.t * th[0] * g * e * sn,
                2.0 * p.t * th[0] * g * e * cs,
            ];
            for i in 0..4 {
                jtr[i] += d[i] * wi * ri;
                for j in 0..4 {
                    jtj[i][j] += d[i] * d[j] * wi * wi;
                }
            }
        }
        let mut improved = false;
        for _ in 0..20 {
            let a = Mat::from_fn(4, 4, |i, j| jtj[i][j] + if i == j { mu * jtj[i][i].max(1e-300) } else { 0.0 });
            let step = match linalg::lu_solve(&a, &jtr) {
                Ok(s) => s,
                Err(_) => {
                    mu *= 10.0;
                    continue;
                }
            };
            let trial = [th[0] + step[0], th[1] + step[1], th[2] + step[2], th[3] + step[3]];
            let rt = model_residuals(samples, w, &trial);
            let ct = cost(&rt);
            if ct < c {
                let rel = (c - ct) / c.max(f64::MIN_POSITIVE);
                th = trial;
                r = rt;
                c = ct;
                mu = (mu * 0.3).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if th.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitIllConditioned("refinement diverged".into()));
    }
    Ok(th)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_synthetic_parameters() {
        let truth = CurveFit { a: 0.7, b: 0.4, alpha: 0.3, beta: 0.05, rms_relative: 0.0, variable: CurveVariable::HalfPeriod };
        let mut samples = Vec::new();
        for t in [20.0, 25.0, 30.0, 35.0] {
            for xi in xi_grid(16) {
                if xi != 0.0 {
                    samples.push(CurveSample { t, xi, lambda: truth.eval(xi, t) });
                }
            }
        }
        let fit = fit_samples(&samples, 0.29, 0.052, &FitOpts::default()).unwrap();
        assert!((fit.a - 0.7).abs() < 1e-8, "{fit:?}");
        assert!((fit.b - 0.4).abs() < 1e-8);
        assert!((fit.alpha - 0.3).abs() < 1e-8);
        assert!((fit.beta - 0.05).abs() < 1e-8);
        assert!(fit.rms_relative < 1e-8);
    }

    #[test]
    fn fit_rejects_too_few_periods() {
        let samples = vec![CurveSample { t: 1.0, xi: 1.0, lambda: 0.1 }];
        assert!(matches!(fit_samples(&samples, 1.0, 1.0, &FitOpts::default()), Err(Error::FitIllConditioned(_))));
    }

    #[test]
    fn essential_line_at_zero_epsilon() {
        let p = Params::new(1.0, 2.0, 0.0).unwrap();
        let ks: Vec<f64> = (0..64).map(|i| i as f64 * 0.3).collect();
        let r = essential_line_check(&p, &ks).unwrap();
        assert_eq!(r.max_deviation, 0.0);
        assert!(!r.out_of_regime);
    }

    #[test]
    fn large_background_is_out_of_regime() {
        let p = Params::new(1.0, 2.0, 0.05).unwrap();
        let r = essential_line_check_at(&p, [1.0, 0.0], &[0.0, 0.5, 1.0]);
        assert!(r.out_of_regime && r.max_deviation > 0.0);
    }

    #[test]
    fn apriori_box_values() {
        let g = Grid::new(10.0, 16).unwrap();
        let p = Params::new(1.0, 2.0, 0.0).unwrap();
        let b = apriori_box_for(&Field2::constant(g, [2f64.sqrt(), 0.0]), &p);
        assert!((b.eta1 - 9.0).abs() < 1e-14);
        let b = apriori_box_for(&Field2::zeros(g), &p);
        assert_eq!(b.eta1, 1.0);
    }

    #[test]
    fn xi_grid_contains_zero() {
        let g = xi_grid(8);
        assert_eq!(g.len(), 8);
        assert!(g.contains(&0.0));
        assert_eq!(g[0], -PI);
    }
}
