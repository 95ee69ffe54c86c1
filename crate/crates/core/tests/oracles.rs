//! Checks against independent references: finite differences, closed-form
//! symbols and transforms, and constants computed in 40-digit arithmetic.

use std::f64::consts::PI;

use combforge::dynamics::{equilibrium, steady_state};
use combforge::grid::{Field2, Grid};
use combforge::model::{bifurcation_angles, physical_scaling, rescale_to_physical, soliton_profile, Params};
use combforge::spectra::{bloch_matrix_q, bloch_selfadjoint, spectrum_distance, symbol_eigenvalues};
use combforge::stationary::{jacobian, newton_solve, residual, NewtonOpts};
use combforge::{linalg, SolitonTemplate};
use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// acos(sqrt(2) / pi) to 20 digits.
const THETA_ZETA1_F2: f64 = 1.103_853_876_795_924_716_8;
/// Smallest root of rho((1 - rho)^2 + 0.05^2) = 0.05^2 * 2^2.
const RHO_ZETA1_F2_EPS005: f64 = 0.010_180_789_762_587_518_676;
/// u_inf = -i eps f / (zeta - rho - i eps) at zeta = 1, f = 2, eps = 0.05.
const U_INF_ZETA1_F2_EPS005: [f64; 2] = [0.005_090_394_881_293_759_338, -0.100_771_412_823_975_118_51];

fn random_smooth_field(grid: Grid, seed: u64) -> Field2 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: Vec<[f64; 4]> = (0..6).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
    Field2::from_fn(grid, |x| {
        let mut v = [0.0, 0.0];
        for (m, a) in c.iter().enumerate() {
            let w = 2.0 * PI * m as f64 * x / grid.period;
            v[0] += a[0] * w.cos() + a[1] * w.sin();
            v[1] += a[2] * w.cos() + a[3] * w.sin();
        }
        v
    })
}

#[test]
fn bifurcation_angle_matches_reference() {
    let a = bifurcation_angles(&Params::new(1.0, 2.0, 0.05).unwrap()).unwrap();
    assert!((a.theta_stable - THETA_ZETA1_F2).abs() < 1e-15);
    assert!((a.theta_unstable + THETA_ZETA1_F2).abs() < 1e-15);
}

#[test]
fn background_state_matches_reference_root() {
    let p = Params::new(1.0, 2.0, 0.05).unwrap();
    let u = steady_state(&p).unwrap();
    assert!((u[0] - U_INF_ZETA1_F2_EPS005[0]).abs() < 1e-15);
    assert!((u[1] - U_INF_ZETA1_F2_EPS005[1]).abs() < 1e-15);
    assert!((u[0] * u[0] + u[1] * u[1] - RHO_ZETA1_F2_EPS005).abs() < 1e-15);
    let eq = equilibrium(&p).unwrap();
    assert_eq!(eq.u_inf, u);
}

#[test]
fn jacobian_matches_central_differences() {
    let g = Grid::new(12.0, 64).unwrap();
    let p = Params::new(1.3, 1.7, 0.08).unwrap();
    let u = random_smooth_field(g, 1);
    let v = random_smooth_field(g, 2);
    let jac = jacobian(&u, &p);
    let jv = linalg::mat_vec(&jac, &v.stacked());
    let h = 1e-6 * u.sup_norm().max(1.0) / v.sup_norm();
    let plus = residual(&u.add(&v.scale(h)), &p).stacked();
    let minus = residual(&u.sub(&v.scale(h)), &p).stacked();
    let fd: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    let num: f64 = jv.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let den: f64 = jv.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(num / den < 1e-6, "relative error {}", num / den);
}

#[test]
fn jacobian_at_zero_field_has_symbol_eigenvalues() {
    let g = Grid::new(10.0, 32).unwrap();
    let p = Params::new(1.0, 2.0, 0.05).unwrap();
    let jac = jacobian(&Field2::zeros(g), &p);
    let computed = linalg::eigenvalues_real(&jac).unwrap();
    let expected: Vec<Complex64> = g
        .wavenumbers()
        .iter()
        .flat_map(|&k| {
            let s = k * k + p.zeta;
            [Complex64::new(-p.epsilon, s), Complex64::new(-p.epsilon, -s)]
        })
        .collect();
    assert!(spectrum_distance(&computed, &expected) < 1e-9);
}

#[test]
fn bloch_spectrum_at_background_matches_symbol() {
    let g = Grid::new(9.0, 32).unwrap();
    let p = Params::new(1.0, 2.0, 0.05).unwrap();
    let u = steady_state(&p).unwrap();
    let field = Field2::constant(g, u);
    for xi in [0.0, 0.7, -2.1] {
        let q = xi / g.period;
        let m = bloch_matrix_q(&field, &p, q);
        let computed = linalg::eigenvalues_complex(&m).unwrap();
        let expected: Vec<Complex64> = (0..g.n)
            .flat_map(|j| {
                let k = g.wavenumber(j);
                // The Nyquist column is a cosine, whose shifted symbol is k^2 + q^2.
                let kk = if g.is_nyquist(j) { (k * k + q * q).sqrt() } else { k + q };
                symbol_eigenvalues(&p, u, kk)
            })
            .collect();
        assert!(spectrum_distance(&computed, &expected) < 1e-9, "xi = {xi}");
    }
}

#[test]
fn selfadjoint_part_is_hermitian() {
    let g = Grid::new(20.0, 64).unwrap();
    let p = Params::new(1.0, 2.0, 0.05).unwrap();
    let f = soliton_profile(0.4, 1.0, 0.0, g);
    let l = bloch_selfadjoint(&f, &p, 0.13);
    let mut worst: f64 = 0.0;
    for i in 0..l.nrows() {
        for j in 0..l.ncols() {
            worst = worst.max((l[(i, j)] - l[(j, i)].conj()).norm());
        }
    }
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn bloch_matrix_at_zero_shift_is_the_jacobian() {
    let g = Grid::new(20.0, 64).unwrap();
    let p = Params::new(1.0, 2.0, 0.05).unwrap();
    let f = random_smooth_field(g, 5);
    let b = bloch_matrix_q(&f, &p, 0.0);
    let j: Mat<f64> = jacobian(&f, &p);
    let mut worst: f64 = 0.0;
    for r in 0..j.nrows() {
        for c in 0..j.ncols() {
            worst = worst.max((b[(r, c)] - Complex64::new(j[(r, c)], 0.0)).norm());
        }
    }
    assert!(worst < 1e-13, "{worst}");
}

#[test]
fn soliton_transform_is_a_sech() {
    // The transform of sqrt(2) sech(x) is sqrt(2) pi sech(pi k / 2).
    let g = Grid::new(60.0, 512).unwrap();
    let f = soliton_profile(0.0, 1.0, 0.0, g);
    let comb = f.comb();
    let mut checked = 0;
    for (k, lm) in comb.wavenumbers.iter().zip(&comb.log_magnitude) {
        if k.abs() <= 10.0 {
            let exact = (2f64.sqrt() * PI / (PI * k / 2.0).cosh()).ln();
            assert!((lm - exact).abs() < 1e-6, "k = {k}: {lm} vs {exact}");
            checked += 1;
        }
    }
    assert!(checked > 150);
    // The tail is linear with slope -pi/2 in |k|.
    let pick = |k0: f64| {
        let i = comb.wavenumbers.iter().position(|k| (k - k0).abs() < 1e-9).unwrap();
        comb.log_magnitude[i]
    };
    let k1 = 2.0 * PI * 60.0 / 60.0;
    let k2 = 2.0 * PI * 120.0 / 60.0;
    let slope = (pick(k2) - pick(k1)) / (k2 - k1);
    assert!((slope + PI / 2.0).abs() < 1e-6, "{slope}");
}

#[test]
fn rescaled_solution_solves_the_physical_equation() {
    let g = Grid::new(40.0, 256).unwrap();
    let p = Params::new(1.0, 2.0, 0.05).unwrap();
    let guess = combforge::model::build_guess(&SolitonTemplate::single(THETA_ZETA1_F2), &p, g).unwrap();
    let sol = newton_solve(&guess.field, &p, &NewtonOpts::default()).unwrap();
    let d = 0.7;
    let phys = rescale_to_physical(&sol, d).unwrap();
    let sc = physical_scaling(p.epsilon, d).unwrap();
    assert_eq!(phys.params.epsilon, 1.0);
    assert!((phys.params.zeta - 20.0).abs() < 1e-12);
    let r = residual(&phys.field, &phys.params).sup_norm();
    assert!(r < 1e-10 * sc.amplitude.powi(3), "{r}");
}
