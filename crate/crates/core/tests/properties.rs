//! Structural invariants checked on randomly drawn inputs.

use std::f64::consts::PI;

use combforge::dynamics::{equilibrium, eigenvalue_mismatch, nu_squared, reverse, vector_field};
use combforge::evolve::{random_perturbation, Evolver, ShiftSearch};
use combforge::grid::{Field2, Grid};
use combforge::io::csv_table;
use combforge::model::{
    bifurcation_angles, bifurcation_residual, rescale_from_physical, rescale_to_physical, soliton_profile, Params,
};
use combforge::spectra::{fit_samples, CurveSample, FitOpts};
use combforge::stationary::{residual, Solution};
use proptest::prelude::*;

fn rotate(u: &Field2, phi: f64) -> Field2 {
    let (c, s) = (phi.cos(), phi.sin());
    Field2::new(
        u.grid,
        u.u1.iter().zip(&u.u2).map(|(a, b)| c * a - s * b).collect(),
        u.u1.iter().zip(&u.u2).map(|(a, b)| s * a + c * b).collect(),
    )
    .unwrap()
}

fn params() -> impl Strategy<Value = Params> {
    (0.2f64..3.0, 1.5f64..4.0, 0.0f64..0.3).prop_map(|(z, f, e)| Params::new(z, f, e).unwrap())
}

fn field(n: usize) -> impl Strategy<Value = Field2> {
    (1.0f64..30.0, any::<u64>(), 0.01f64..2.0).prop_map(move |(l, seed, amp)| {
        random_perturbation(Grid::new(l, n).unwrap(), 5, amp, seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn vector_field_is_reversible(p in params(), u in prop::array::uniform4(-2.0f64..2.0)) {
        let lhs = vector_field(&reverse(&u), &p);
        let rhs = reverse(&vector_field(&u, &p));
        for i in 0..4 {
            prop_assert!((lhs[i] + rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn unforced_residual_commutes_with_rotation(p in params(), u in field(32), phi in -PI..PI) {
        let p0 = p.with_epsilon(0.0);
        let a = residual(&rotate(&u, phi), &p0);
        let b = rotate(&residual(&u, &p0), phi);
        prop_assert!(a.sup_distance(&b) < 1e-10 * (1.0 + b.sup_norm()));
    }

    #[test]
    fn soliton_phase_is_a_rotation(theta in -PI..PI, zeta in 0.1f64..5.0, c in -3.0f64..3.0) {
        let g = Grid::new(20.0, 64).unwrap();
        let a = soliton_profile(theta, zeta, c, g);
        let b = rotate(&soliton_profile(0.0, zeta, c, g), theta);
        prop_assert!(a.sup_distance(&b) < 1e-14);
    }

    #[test]
    fn spectrum_satisfies_parseval(u in field(64)) {
        let s: f64 = u.spectrum().iter().map(|c| c.norm_sqr()).sum();
        let lhs = s / u.grid.period;
        let rhs = u.l2_norm().powi(2);
        prop_assert!((lhs - rhs).abs() < 1e-12 * rhs.max(1e-300));
    }

    #[test]
    fn derivative_flips_parity(u in field(64)) {
        let e = u.even_project();
        let d1 = e.derivative(1).unwrap();
        let d2 = e.derivative(2).unwrap();
        let scale = 1.0 + d1.sup_norm();
        prop_assert!(d1.even_project().sup_norm() < 1e-12 * scale);
        prop_assert!(d2.oddness() < 1e-10 * (1.0 + d2.sup_norm()));
    }

    #[test]
    fn even_projection_is_idempotent(u in field(48)) {
        let e = u.even_project();
        prop_assert!(e.even_project().sup_distance(&e) == 0.0);
        prop_assert!(e.oddness() < 1e-15 * (1.0 + e.sup_norm()));
    }

    #[test]
    fn physical_rescaling_round_trips(u in field(32), eps in 0.01f64..2.0, d in 0.05f64..5.0) {
        let p = Params::new(1.0, 2.0, eps).unwrap();
        let sol = Solution::from_field(u, p).unwrap();
        let back = rescale_from_physical(&rescale_to_physical(&sol, d).unwrap(), eps).unwrap();
        prop_assert!(back.field.sup_distance(&sol.field) < 1e-13 * (1.0 + sol.field.sup_norm()));
        prop_assert!((back.period - sol.period).abs() < 1e-13 * sol.period);
        prop_assert!((back.params.zeta - p.zeta).abs() < 1e-13);
        prop_assert!((back.params.f - p.f).abs() < 1e-13);
        prop_assert_eq!(back.params.epsilon, eps);
    }

    #[test]
    fn bifurcation_angles_solve_their_equation(zeta in 0.05f64..4.0, extra in 0.01f64..3.0, eps in 0.0f64..0.5) {
        let f = (8.0 * zeta).sqrt() / PI + extra;
        let p = Params::new(zeta, f, eps).unwrap();
        let a = bifurcation_angles(&p).unwrap();
        prop_assert!(bifurcation_residual(&p, a.theta_stable).abs() < 1e-12 * (1.0 + f));
        prop_assert!(bifurcation_residual(&p, a.theta_unstable).abs() < 1e-12 * (1.0 + f));
        prop_assert!(a.theta_stable > 0.0 && a.theta_stable < PI);
    }

    #[test]
    fn equilibrium_eigenvalues_form_a_quadruple(zeta in 0.2f64..3.0, f in 1.5f64..3.0, eps in 1e-4f64..0.05) {
        // Saddle-focus regime: the background intensity stays below eps.
        prop_assume!(eps * f * f < 0.5 * zeta * zeta);
        let p = Params::new(zeta, f, eps).unwrap();
        let eq = equilibrium(&p).unwrap();
        prop_assert!(eq.is_saddle_focus());
        prop_assert!(eigenvalue_mismatch(&eq) < 1e-8);
        let rho = eq.u_inf[0].powi(2) + eq.u_inf[1].powi(2);
        let nu = nu_squared(&p, rho);
        let root = nu[0].sqrt();
        let (a, b) = (root.re.abs(), root.im.abs());
        prop_assert!((a - eq.alpha).abs() < 1e-10 * (1.0 + a));
        prop_assert!((b - eq.beta).abs() < 1e-10 * (1.0 + b));
        for target in [(a, b), (a, -b), (-a, b), (-a, -b)] {
            let hit = eq.eigenvalues.iter().any(|v| (v.re - target.0).abs() + (v.im - target.1).abs() < 1e-8);
            prop_assert!(hit);
        }
    }

    #[test]
    fn splitting_runs_backwards(u in field(64), steps in 1usize..50) {
        let p = Params::new(1.0, 2.0, 0.0).unwrap();
        let fwd = Evolver::new(u.grid, p, 0.01).unwrap().advance(&u, steps);
        let back = Evolver::new(u.grid, p, -0.01).unwrap().advance(&fwd, steps);
        prop_assert!(back.sup_distance(&u) < 1e-11 * (1.0 + u.sup_norm()));
    }

    #[test]
    fn shift_search_never_loses_to_no_shift(u in field(64), seed in any::<u64>()) {
        let v = u.add(&random_perturbation(u.grid, 3, 0.1, seed));
        let search = ShiftSearch::new(&u, u.grid.period);
        let fit = search.best(&v);
        prop_assert!(fit.distance <= v.sub(&u).l2_norm() + 1e-12);
    }

    #[test]
    fn csv_round_trips(rows in prop::collection::vec(prop::array::uniform3(any::<f64>().prop_filter("finite", |v| v.is_finite())), 0..20)) {
        let text = csv_table(&["a", "b", "c"], rows.iter().map(|r| r.as_slice()));
        let mut lines = text.lines();
        prop_assert_eq!(lines.next(), Some("a,b,c"));
        for (line, row) in lines.zip(&rows) {
            let vals: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
            prop_assert_eq!(vals.as_slice(), row.as_slice());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn curve_fit_recovers_synthetic_parameters(
        a in 0.5f64..5.0,
        b in -3.0f64..3.0,
        alpha in 0.1f64..0.5,
        beta in 0.05f64..0.3,
    ) {
        let ts: Vec<f64> = (0..12).map(|j| 10.0 + 2.5 * j as f64).collect();
        let xis = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let samples: Vec<CurveSample> = ts
            .iter()
            .flat_map(|&t| {
                xis.iter().map(move |&xi| CurveSample {
                    t,
                    xi,
                    lambda: a * (xi.cos() - 1.0) * (-2.0 * alpha * t).exp() * (2.0 * beta * t + b).sin(),
                })
            })
            .collect();
        let fit = fit_samples(&samples, alpha * 1.01, beta * 0.99, &FitOpts::default()).unwrap();
        prop_assert!((fit.alpha - alpha).abs() < 1e-6 * alpha, "{} vs {}", fit.alpha, alpha);
        prop_assert!((fit.beta - beta).abs() < 1e-6 * beta, "{} vs {}", fit.beta, beta);
        for s in &samples {
            prop_assert!((fit.eval(s.xi, s.t) - s.lambda).abs() < 1e-6 * a * (-2.0 * alpha * s.t).exp());
        }
    }
}
