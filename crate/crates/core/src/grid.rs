//! Periodic collocation grid, Fourier differentiation, even projection and
//! comb extraction.
//!
//! Grid points are `x_j = -L/2 + j L / n` for `j = 0..n`, so the grid is
//! symmetric about the origin under the index map `j -> (n - j) mod n`.
//! The forward transform is the quadrature of the continuous Fourier
//! transform, `u_hat(k) = (L/n) * sum_j u_j exp(-i k x_j)`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Uniform periodic grid on `[-L/2, L/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub period: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(period: f64, n: usize) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidParams(format!("grid period must be positive, got {period}")));
        }
        if n < 16 || n % 2 != 0 {
            return Err(Error::InvalidParams(format!("grid size must be even and >= 16, got {n}")));
        }
        Ok(Self { period, n })
    }

    /// Grid spacing `L/n`.
    pub fn h(&self) -> f64 {
        self.period / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -0.5 * self.period + j as f64 * self.h()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Index of the grid point at `-x_j`.
    pub fn reflect(&self, j: usize) -> usize {
        (self.n - j) % self.n
    }

    /// Signed mode number of FFT slot `m` (`-n/2..n/2`).
    pub fn mode(&self, m: usize) -> i64 {
        let n = self.n as i64;
        let m = m as i64;
        if m < n / 2 {
            m
        } else {
            m - n
        }
    }

    /// Wavenumber `2 pi m / L` of FFT slot `m`.
    pub fn wavenumber(&self, m: usize) -> f64 {
        2.0 * PI * self.mode(m) as f64 / self.period
    }

    /// Wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.wavenumber(m)).collect()
    }

    pub fn is_nyquist(&self, m: usize) -> bool {
        m == self.n / 2
    }

    /// First column of the Hermitian circulant matrix with Fourier symbol
    /// `(k + q)^2`, i.e. the collocation matrix of `-(d/dx + i q)^2`.
    ///
    /// The Nyquist slot uses `k_N^2 + q^2`, the average over `+-k_N`, which
    /// keeps the matrix Hermitian and makes the `q` and `-q` matrices exact
    /// complex conjugates of each other.
    pub fn shifted_laplacian_column(&self, q: f64) -> Vec<Complex64> {
        let n = self.n;
        let mut symbol: Vec<Complex64> = (0..n)
            .map(|m| {
                let k = self.wavenumber(m);
                let s = if self.is_nyquist(m) { k * k + q * q } else { (k + q) * (k + q) };
                Complex64::new(s, 0.0)
            })
            .collect();
        inverse_plan(n).process(&mut symbol);
        let scale = 1.0 / n as f64;
        symbol.iter().map(|c| c * scale).collect()
    }
}

/// A two-component real field `u = (Re u, Im u)` sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field2 {
    pub grid: Grid,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

/// Fourier comb `log|u_hat(k)|`, sorted by wavenumber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comb {
    pub wavenumbers: Vec<f64>,
    pub log_magnitude: Vec<f64>,
}

impl Field2 {
    pub fn new(grid: Grid, u1: Vec<f64>, u2: Vec<f64>) -> Result<Self> {
        if u1.len() != grid.n || u2.len() != grid.n {
            return Err(Error::InvalidParams(format!(
                "field arrays have lengths {} and {}, grid has {} points",
                u1.len(),
                u2.len(),
                grid.n
            )));
        }
        Ok(Self { grid, u1, u2 })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, u1: vec![0.0; grid.n], u2: vec![0.0; grid.n] }
    }

    pub fn constant(grid: Grid, c: [f64; 2]) -> Self {
        Self { grid, u1: vec![c[0]; grid.n], u2: vec![c[1]; grid.n] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> [f64; 2]) -> Self {
        let (u1, u2) = grid.points().into_iter().map(|x| {
            let v = f(x);
            (v[0], v[1])
        }).unzip();
        Self { grid, u1, u2 }
    }

    pub fn len(&self) -> usize {
        self.grid.n
    }

    pub fn is_empty(&self) -> bool {
        self.grid.n == 0
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.u1.iter().zip(&self.u2).map(|(&a, &b)| Complex64::new(a, b)).collect()
    }

    pub fn from_complex(grid: Grid, z: &[Complex64]) -> Self {
        Self { grid, u1: z.iter().map(|c| c.re).collect(), u2: z.iter().map(|c| c.im).collect() }
    }

    /// Stacked vector `(u1, u2)` of length `2n`.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.u1.clone();
        v.extend_from_slice(&self.u2);
        v
    }

    pub fn from_stacked(grid: Grid, v: &[f64]) -> Self {
        let n = grid.n;
        Self { grid, u1: v[..n].to_vec(), u2: v[n..2 * n].to_vec() }
    }

    pub fn sup_norm(&self) -> f64 {
        self.u1
            .iter()
            .zip(&self.u2)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    /// Quadrature L2 norm `(h * sum |u_j|^2)^(1/2)`.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.u1.iter().zip(&self.u2).map(|(a, b)| a * a + b * b).sum();
        (s * self.grid.h()).sqrt()
    }

    pub fn sub(&self, other: &Field2) -> Field2 {
        Field2 {
            grid: self.grid,
            u1: self.u1.iter().zip(&other.u1).map(|(a, b)| a - b).collect(),
            u2: self.u2.iter().zip(&other.u2).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &Field2) -> Field2 {
        Field2 {
            grid: self.grid,
            u1: self.u1.iter().zip(&other.u1).map(|(a, b)| a + b).collect(),
            u2: self.u2.iter().zip(&other.u2).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Field2 {
        Field2 {
            grid: self.grid,
            u1: self.u1.iter().map(|a| a * s).collect(),
            u2: self.u2.iter().map(|a| a * s).collect(),
        }
    }

    /// Largest pointwise distance `max_j |u_j - v_j|`.
    pub fn sup_distance(&self, other: &Field2) -> f64 {
        self.sub(other).sup_norm()
    }

    /// Spectral derivative of order 1 or 2.
    pub fn derivative(&self, order: u32) -> Result<Field2> {
        if order != 1 && order != 2 {
            return Err(Error::UnsupportedOrder(order));
        }
        let n = self.grid.n;
        let mut z = self.to_complex();
        forward_plan(n).process(&mut z);
        for (m, c) in z.iter_mut().enumerate() {
            let k = self.grid.wavenumber(m);
            *c *= if order == 1 {
                if self.grid.is_nyquist(m) {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, k)
                }
            } else {
                Complex64::new(-k * k, 0.0)
            } / n as f64;
        }
        inverse_plan(n).process(&mut z);
        Ok(Field2::from_complex(self.grid, &z))
    }

    /// Even part `(u(x) + u(-x)) / 2` on the grid.
    pub fn even_project(&self) -> Field2 {
        let g = self.grid;
        let sym = |v: &[f64]| (0..g.n).map(|j| 0.5 * (v[j] + v[g.reflect(j)])).collect();
        Field2 { grid: g, u1: sym(&self.u1), u2: sym(&self.u2) }
    }

    /// Largest deviation from evenness, `max_j |u(x_j) - u(-x_j)|`.
    pub fn oddness(&self) -> f64 {
        let g = self.grid;
        (0..g.n)
            .map(|j| {
                let r = g.reflect(j);
                (self.u1[j] - self.u1[r]).hypot(self.u2[j] - self.u2[r])
            })
            .fold(0.0, f64::max)
    }

    /// Continuous Fourier coefficients `u_hat(k_m)` of `u1 + i u2` in FFT order.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let g = self.grid;
        let mut z = self.to_complex();
        forward_plan(g.n).process(&mut z);
        let h = g.h();
        z.iter()
            .enumerate()
            .map(|(m, c)| {
                // exp(i k_m L / 2) = (-1)^m accounts for x_0 = -L/2.
                let sign = if g.mode(m).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                c * (h * sign)
            })
            .collect()
    }

    /// Frequency comb with magnitudes floored at `1e-16` times the largest line.
    pub fn comb(&self) -> Comb {
        let g = self.grid;
        let spec = self.spectrum();
        let max = spec.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let floor = if max > 0.0 { 1e-16 * max } else { f64::MIN_POSITIVE };
        let mut order: Vec<usize> = (0..g.n).collect();
        order.sort_by_key(|&m| g.mode(m));
        Comb {
            wavenumbers: order.iter().map(|&m| g.wavenumber(m)).collect(),
            log_magnitude: order.iter().map(|&m| spec[m].norm().max(floor).ln()).collect(),
        }
    }

    /// Trigonometric interpolant of the field.
    pub fn interpolant(&self) -> Interpolant {
        let g = self.grid;
        let n = g.n;
        let mut z = self.to_complex();
        forward_plan(n).process(&mut z);
        let coeffs = z.iter().map(|c| c / n as f64).collect();
        Interpolant { grid: g, coeffs }
    }

    /// Samples the trigonometric interpolant on another grid with the same period.
    pub fn resample(&self, target: Grid) -> Field2 {
        let interp = self.interpolant();
        Field2::from_fn(target, |x| interp.eval(x))
    }
}

/// Band-limited interpolant `sum_m c_m exp(i k_m (x + L/2))`, with the
/// Nyquist term replaced by its cosine so that real data interpolate to real
/// functions.
#[derive(Debug, Clone)]
pub struct Interpolant {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Interpolant {
    /// Value and first two derivatives at `x`, each as `[u1, u2]`.
    pub fn eval_derivs(&self, x: f64) -> [[f64; 2]; 3] {
        let g = self.grid;
        let s = x + 0.5 * g.period;
        let mut acc = [Complex64::new(0.0, 0.0); 3];
        for (m, c) in self.coeffs.iter().enumerate() {
            let k = g.wavenumber(m);
            if g.is_nyquist(m) {
                let (sn, cs) = (k * s).sin_cos();
                acc[0] += c * cs;
                acc[1] += c * (-k * sn);
                acc[2] += c * (-k * k * cs);
            } else {
                let e = Complex64::from_polar(1.0, k * s);
                acc[0] += c * e;
                acc[1] += c * e * Complex64::new(0.0, k);
                acc[2] += c * e * (-k * k);
            }
        }
        [[acc[0].re, acc[0].im], [acc[1].re, acc[1].im], [acc[2].re, acc[2].im]]
    }

    pub fn eval(&self, x: f64) -> [f64; 2] {
        self.eval_derivs(x)[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(12.0, 64).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(1.0, 15).is_err());
        assert!(Grid::new(1.0, 8).is_err());
        assert!(Grid::new(-1.0, 32).is_err());
    }

    #[test]
    fn constant_has_zero_derivative() {
        let f = Field2::constant(grid(), [1.5, -0.3]);
        for order in [1, 2] {
            assert!(f.derivative(order).unwrap().sup_norm() < 1e-13);
        }
    }

    #[test]
    fn sine_and_cosine_derivatives() {
        let g = grid();
        let w = 2.0 * PI / g.period;
        let f = Field2::from_fn(g, |x| [(w * x).sin(), 0.0]);
        let d = f.derivative(1).unwrap();
        let expected = Field2::from_fn(g, |x| [w * (w * x).cos(), 0.0]);
        assert!(d.sup_distance(&expected) < 1e-12);

        let f = Field2::from_fn(g, |x| [(2.0 * w * x).cos(), 0.0]);
        let d = f.derivative(2).unwrap();
        let expected = Field2::from_fn(g, |x| [-(2.0 * w).powi(2) * (2.0 * w * x).cos(), 0.0]);
        assert!(d.sup_distance(&expected) < 1e-12);
    }

    #[test]
    fn unsupported_order() {
        assert_eq!(Field2::zeros(grid()).derivative(3), Err(Error::UnsupportedOrder(3)));
    }

    #[test]
    fn reflection_maps_points() {
        let g = grid();
        for j in 1..g.n {
            assert!((g.x(g.reflect(j)) + g.x(j)).abs() < 1e-12);
        }
        assert_eq!(g.reflect(0), 0);
    }

    #[test]
    fn even_and_odd_projection() {
        let g = grid();
        let even = Field2::from_fn(g, |x| [(-x * x).exp(), x.cos()]);
        assert!(even.even_project().sup_distance(&even) < 1e-15);
        let odd = Field2::from_fn(g, |x| [(PI * x / 6.0).sin(), x * (-x * x).exp()]);
        assert!(odd.even_project().sup_norm() < 1e-14);
        let line = Field2::from_fn(g, |x| [x, 0.0]);
        // x_0 = -L/2 is its own mirror image on the periodic grid.
        let p = line.even_project();
        assert!(p.u1[1..].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn comb_of_constant_and_mode() {
        let g = grid();
        let c = Field2::constant(g, [0.7, 0.0]);
        let comb = c.comb();
        let zero = comb.wavenumbers.iter().position(|&k| k == 0.0).unwrap();
        assert!((comb.log_magnitude[zero] - (0.7 * g.period).ln()).abs() < 1e-12);
        let others = comb.log_magnitude.iter().enumerate().filter(|(i, _)| *i != zero);
        for (_, v) in others {
            assert!(*v < comb.log_magnitude[zero] - 30.0);
        }

        let k1 = 2.0 * PI / g.period;
        let f = Field2::from_fn(g, |x| [(k1 * x).cos(), (k1 * x).sin()]);
        let comb = f.comb();
        let (imax, _) = comb
            .log_magnitude
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!((comb.wavenumbers[imax] - k1).abs() < 1e-12);
    }

    #[test]
    fn interpolant_reproduces_samples_and_offgrid() {
        let g = grid();
        let w = 2.0 * PI / g.period;
        let f = Field2::from_fn(g, |x| [(3.0 * w * x).sin(), (w * x).cos()]);
        let it = f.interpolant();
        for j in [0, 5, 33] {
            let v = it.eval(g.x(j));
            assert!((v[0] - f.u1[j]).abs() < 1e-13 && (v[1] - f.u2[j]).abs() < 1e-13);
        }
        let x = 0.3217;
        let d = it.eval_derivs(x);
        assert!((d[0][0] - (3.0 * w * x).sin()).abs() < 1e-12);
        assert!((d[1][0] - 3.0 * w * (3.0 * w * x).cos()).abs() < 1e-12);
        assert!((d[2][1] + w * w * (w * x).cos()).abs() < 1e-12);
    }

    #[test]
    fn shifted_laplacian_matches_second_derivative() {
        let g = grid();
        let col = g.shifted_laplacian_column(0.0);
        let f = Field2::from_fn(g, |x| [(-(x * x)).exp(), 0.0]);
        let d2 = f.derivative(2).unwrap();
        for j in 0..g.n {
            let mut acc = 0.0;
            for l in 0..g.n {
                acc += col[(j + g.n - l) % g.n].re * f.u1[l];
            }
            assert!((acc + d2.u1[j]).abs() < 1e-10);
        }
    }
}
