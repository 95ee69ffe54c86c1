//! Parameters, bright solitons, bifurcation angles, superposition guesses and
//! the scaling map to the physical form of the equation.
//!
//! The working equation is the perturbed focusing NLS equation
//! `i u_t = -u_xx + zeta u - |u|^2 u + eps i (-u + f)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics;
use crate::error::{Error, Result};
use crate::grid::{Field2, Grid};
use crate::stationary::Solution;

/// Detuning, forcing, damping scale and an optional dispersion coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub zeta: f64,
    pub f: f64,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
}

impl Params {
    pub fn new(zeta: f64, f: f64, epsilon: f64) -> Result<Self> {
        let p = Self { zeta, f, epsilon, d: None };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta.is_finite() && self.zeta > 0.0) {
            return Err(Error::InvalidParams(format!("zeta must be positive, got {}", self.zeta)));
        }
        if !(self.f.is_finite() && self.f > 0.0) {
            return Err(Error::InvalidParams(format!("f must be positive, got {}", self.f)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if let Some(d) = self.d {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidParams(format!("d must be positive, got {d}")));
            }
        }
        Ok(())
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Self { epsilon, ..self }
    }

    /// Dispersion coefficient in front of `-u_xx` (1 unless set).
    pub fn dispersion(&self) -> f64 {
        self.d.unwrap_or(1.0)
    }
}

/// Phase and pulse positions of a superposition of bright solitons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonTemplate {
    pub theta: f64,
    #[serde(default)]
    pub centers: Vec<f64>,
    #[serde(default)]
    pub include_center_pulse: bool,
}

impl SolitonTemplate {
    pub fn single(theta: f64) -> Self {
        Self { theta, centers: Vec::new(), include_center_pulse: true }
    }

    /// Pulses at `+-c` for each entry of `half_distances`.
    pub fn symmetric(theta: f64, half_distances: &[f64], include_center_pulse: bool) -> Self {
        let mut centers: Vec<f64> = half_distances.iter().flat_map(|&c| [-c, c]).collect();
        centers.sort_by(f64::total_cmp);
        Self { theta, centers, include_center_pulse }
    }

    /// All pulse positions, sorted, including the optional pulse at 0.
    pub fn all_centers(&self) -> Vec<f64> {
        let mut c = self.centers.clone();
        if self.include_center_pulse {
            c.push(0.0);
        }
        c.sort_by(f64::total_cmp);
        c
    }

    pub fn is_symmetric(&self) -> bool {
        let c = &self.centers;
        c.iter().zip(c.iter().rev()).all(|(a, b)| (a + b).abs() < 1e-12)
    }
}

/// The two roots of `pi f cos(theta) = 2 sqrt(2 zeta)` in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationAngles {
    /// Root with `sin(theta) > 0`.
    pub theta_stable: f64,
    /// Root with `sin(theta) < 0`.
    pub theta_unstable: f64,
}

/// Relative width of the band around `8 zeta = (pi f)^2` treated as degenerate.
const DEGENERACY_TOL: f64 = 1e-12;

pub fn bifurcation_angles(p: &Params) -> Result<BifurcationAngles> {
    p.validate()?;
    let lhs = 8.0 * p.zeta;
    let rhs = (PI * p.f).powi(2);
    if ((lhs - rhs) / rhs).abs() <= DEGENERACY_TOL {
        return Err(Error::DegenerateBifurcation);
    }
    if lhs > rhs {
        return Err(Error::NoBifurcation { lhs, rhs });
    }
    let c = 2.0 * (2.0 * p.zeta).sqrt() / (PI * p.f);
    let theta = c.acos();
    Ok(BifurcationAngles { theta_stable: theta, theta_unstable: -theta })
}

/// Residual `pi f cos(theta) - 2 sqrt(2 zeta)` of the bifurcation condition.
pub fn bifurcation_residual(p: &Params, theta: f64) -> f64 {
    PI * p.f * theta.cos() - 2.0 * (2.0 * p.zeta).sqrt()
}

/// `sqrt(2 zeta) sech(sqrt(zeta) x) (cos theta, sin theta)` at a single point.
pub fn soliton_value(theta: f64, zeta: f64, x: f64) -> [f64; 2] {
    let a = (2.0 * zeta).sqrt() / (zeta.sqrt() * x).cosh();
    [a * theta.cos(), a * theta.sin()]
}

/// Bright soliton centred at `center`, sampled on the grid.
pub fn soliton_profile(theta: f64, zeta: f64, center: f64, grid: Grid) -> Field2 {
    Field2::from_fn(grid, |x| soliton_value(theta, zeta, x - center))
}

/// Non-fatal report that two pulses of a template sit closer than `5/sqrt(zeta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapWarning {
    pub left: f64,
    pub right: f64,
    pub separation: f64,
    pub minimum: f64,
}

/// Initial guess together with any overlap warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct Guess {
    pub field: Field2,
    pub warnings: Vec<OverlapWarning>,
}

/// Minimum pulse separation `5/sqrt(zeta)` used by the overlap heuristic.
pub fn min_separation(zeta: f64) -> f64 {
    5.0 / zeta.sqrt()
}

/// Superposition of rotated solitons on the constant state `u_inf`.
///
/// The soliton tails are summed over periodic images so that the guess is
/// smooth across the boundary of short periods.
pub fn build_guess(tpl: &SolitonTemplate, p: &Params, grid: Grid) -> Result<Guess> {
    p.validate()?;
    let centers = tpl.all_centers();
    let min_sep = min_separation(p.zeta);
    let mut warnings = Vec::new();
    let mut check = |a: f64, b: f64, sep: f64| {
        if sep < min_sep {
            warnings.push(OverlapWarning { left: a, right: b, separation: sep, minimum: min_sep });
        }
    };
    for w in centers.windows(2) {
        check(w[0], w[1], w[1] - w[0]);
    }
    if centers.len() > 1 {
        let (first, last) = (centers[0], centers[centers.len() - 1]);
        check(last, first, grid.period - (last - first));
    } else if centers.len() == 1 {
        check(centers[0], centers[0], grid.period);
    }

    let background = if p.epsilon > 0.0 { dynamics::steady_state(p)? } else { [0.0, 0.0] };
    let images = image_count(p.zeta, grid.period);
    let field = Field2::from_fn(grid, |x| {
        let mut v = background;
        for &c in &centers {
            for i in -images..=images {
                let s = soliton_value(tpl.theta, p.zeta, x - c - i as f64 * grid.period);
                v[0] += s[0];
                v[1] += s[1];
            }
        }
        v
    });
    Ok(Guess { field, warnings })
}

/// Number of periodic images needed for the sech tails to drop below 1e-18.
fn image_count(zeta: f64, period: f64) -> i64 {
    let decay = zeta.sqrt() * period;
    ((42.0 / decay).ceil() as i64).max(1)
}

/// Scale factors of the map to `i u_t = -d u_xx + (zeta/eps) u - |u|^2 u - i u + i f/sqrt(eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalScaling {
    /// Multiplies lengths (and the period): `(d eps)^(1/2)`.
    pub length: f64,
    /// Multiplies the field amplitude: `eps^(-1/2)`.
    pub amplitude: f64,
    /// Multiplies times: `eps^(-1)`.
    pub time: f64,
    /// Multiplies the detuning: `eps^(-1)`.
    pub detuning: f64,
    /// Multiplies the forcing: `eps^(-1/2)`.
    pub forcing: f64,
}

pub fn physical_scaling(epsilon: f64, d: f64) -> Result<PhysicalScaling> {
    if !(epsilon > 0.0) {
        return Err(Error::ZeroEpsilon);
    }
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::InvalidParams(format!("d must be positive, got {d}")));
    }
    Ok(PhysicalScaling {
        length: (d * epsilon).sqrt(),
        amplitude: epsilon.powf(-0.5),
        time: 1.0 / epsilon,
        detuning: 1.0 / epsilon,
        forcing: epsilon.powf(-0.5),
    })
}

/// Dispersion coefficient for which a solution of period `period` maps to a
/// solution of period 1: `(d eps)^(1/2) L = 1`, i.e. `d = 1 / (eps L^2)`.
pub fn unit_period_dispersion(epsilon: f64, period: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::ZeroEpsilon);
    }
    Ok(1.0 / (epsilon * period * period))
}

/// Maps a stationary solution to the physical form with dispersion `d` and
/// unit damping. The returned parameters carry `epsilon = 1` and `d`.
pub fn rescale_to_physical(s: &Solution, d: f64) -> Result<Solution> {
    let sc = physical_scaling(s.params.epsilon, d)?;
    let grid = Grid::new(s.field.grid.period * sc.length, s.field.grid.n)?;
    let field = Field2 {
        grid,
        u1: s.field.u1.iter().map(|v| v * sc.amplitude).collect(),
        u2: s.field.u2.iter().map(|v| v * sc.amplitude).collect(),
    };
    let params = Params {
        zeta: s.params.zeta * sc.detuning,
        f: s.params.f * sc.forcing,
        epsilon: 1.0,
        d: Some(d),
    };
    Ok(Solution {
        field,
        params,
        residual_norm: s.residual_norm * sc.amplitude.powi(3),
        is_even: s.is_even,
        pulse_centers: s.pulse_centers.iter().map(|c| c * sc.length).collect(),
        period: grid.period,
    })
}

/// Inverse of [`rescale_to_physical`] for the original damping scale `epsilon`.
pub fn rescale_from_physical(s: &Solution, epsilon: f64) -> Result<Solution> {
    let d = s.params.dispersion();
    let sc = physical_scaling(epsilon, d)?;
    let grid = Grid::new(s.field.grid.period / sc.length, s.field.grid.n)?;
    let field = Field2 {
        grid,
        u1: s.field.u1.iter().map(|v| v / sc.amplitude).collect(),
        u2: s.field.u2.iter().map(|v| v / sc.amplitude).collect(),
    };
    let params = Params {
        zeta: s.params.zeta / sc.detuning,
        f: s.params.f / sc.forcing,
        epsilon,
        d: None,
    };
    Ok(Solution {
        field,
        params,
        residual_norm: s.residual_norm / sc.amplitude.powi(3),
        is_even: s.is_even,
        pulse_centers: s.pulse_centers.iter().map(|c| c / sc.length).collect(),
        period: grid.period,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles_solve_condition() {
        let p = Params::new(1.0, 2.0, 0.0).unwrap();
        let a = bifurcation_angles(&p).unwrap();
        assert!(bifurcation_residual(&p, a.theta_stable).abs() < 1e-12);
        assert!(bifurcation_residual(&p, a.theta_unstable).abs() < 1e-12);
        assert!(a.theta_stable.sin() > 0.0 && a.theta_unstable.sin() < 0.0);
        assert!((a.theta_stable.cos() - 2f64.sqrt() / PI).abs() < 1e-15);
    }

    #[test]
    fn angle_errors() {
        let f = 1.3;
        let p = Params::new(PI * PI * f * f / 8.0, f, 0.0).unwrap();
        assert_eq!(bifurcation_angles(&p), Err(Error::DegenerateBifurcation));
        let p = Params::new(10.0, 1.0, 0.0).unwrap();
        assert!(matches!(bifurcation_angles(&p), Err(Error::NoBifurcation { .. })));
    }

    #[test]
    fn soliton_peak_values() {
        let g = Grid::new(20.0, 64).unwrap();
        let s = soliton_profile(0.0, 1.0, 0.0, g);
        let mid = g.n / 2;
        assert!((s.u1[mid] - 2f64.sqrt()).abs() < 1e-15 && s.u2[mid] == 0.0);
        let s = soliton_profile(PI / 2.0, 1.0, 0.0, g);
        assert!(s.u1[mid].abs() < 1e-15 && (s.u2[mid] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn guess_without_background_is_profile() {
        let g = Grid::new(60.0, 256).unwrap();
        let p = Params::new(1.0, 2.0, 0.0).unwrap();
        let guess = build_guess(&SolitonTemplate::single(0.7), &p, g).unwrap();
        assert!(guess.warnings.is_empty());
        // The nearest periodic images still contribute at the 1e-13 level.
        let images = soliton_profile(0.7, 1.0, -60.0, g)
            .add(&soliton_profile(0.7, 1.0, 0.0, g))
            .add(&soliton_profile(0.7, 1.0, 60.0, g));
        assert!(guess.field.sup_distance(&images) < 1e-15);
    }

    #[test]
    fn overlap_is_reported() {
        let g = Grid::new(60.0, 256).unwrap();
        let p = Params::new(1.0, 2.0, 0.0).unwrap();
        let tpl = SolitonTemplate::symmetric(0.0, &[1.0], false);
        let guess = build_guess(&tpl, &p, g).unwrap();
        assert_eq!(guess.warnings.len(), 1);
        assert!((guess.warnings[0].separation - 2.0).abs() < 1e-15);
    }

    #[test]
    fn physical_scaling_factors() {
        let sc = physical_scaling(0.01, 1.0).unwrap();
        assert!((sc.amplitude - 10.0).abs() < 1e-12);
        assert!((sc.detuning - 100.0).abs() < 1e-12);
        let sc = physical_scaling(1.0, 1.0).unwrap();
        assert_eq!((sc.length, sc.amplitude, sc.detuning, sc.forcing), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(physical_scaling(0.0, 1.0), Err(Error::ZeroEpsilon));
    }

    #[test]
    fn unit_period_choice() {
        let (eps, l) = (0.05, 37.0);
        let d = unit_period_dispersion(eps, l).unwrap();
        let sc = physical_scaling(eps, d).unwrap();
        assert!((sc.length * l - 1.0).abs() < 1e-14);
    }
}
