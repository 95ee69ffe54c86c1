//! Dense linear algebra on top of `faer`.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Smallest accepted ratio `min |U_ii| / max |U_ii|` of an LU factorization.
pub const PIVOT_RATIO_MIN: f64 = 1e-14;

/// Solves `a x = b` by partial-pivot LU, rejecting numerically singular matrices.
pub fn lu_solve(a: &Mat<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert_eq!(n, b.len());
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let d = u[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
    if !(ratio >= PIVOT_RATIO_MIN) {
        return Err(Error::SingularJacobian { ratio });
    }
    let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
    let x = lu.solve(&rhs);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularJacobian { ratio });
    }
    Ok(out)
}

/// Minimum-norm least-squares solution of `a x = b`, discarding singular
/// values below `rel_cut` times the largest one.
pub fn truncated_svd_solve(a: &Mat<f64>, b: &[f64], rel_cut: f64) -> Result<Vec<f64>> {
    let svd = a.thin_svd().map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let k = s.dim();
    let smax = (0..k).map(|i| s[i]).fold(0.0, f64::max);
    let mut x = vec![0.0; a.ncols()];
    for i in 0..k {
        let si = s[i];
        if si <= rel_cut * smax {
            continue;
        }
        let coef: f64 = (0..a.nrows()).map(|r| u[(r, i)] * b[r]).sum::<f64>() / si;
        for (c, xc) in x.iter_mut().enumerate() {
            *xc += coef * v[(c, i)];
        }
    }
    Ok(x)
}

/// Singular values in decreasing order.
pub fn singular_values(a: &Mat<f64>) -> Result<Vec<f64>> {
    let mut s = a.singular_values().map_err(|e| Error::Linalg(format!("{e:?}")))?;
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

pub fn eigenvalues_real(a: &Mat<f64>) -> Result<Vec<Complex64>> {
    a.eigenvalues().map_err(|e| Error::Linalg(format!("{e:?}")))
}

pub fn eigenvalues_complex(a: &Mat<c64>) -> Result<Vec<Complex64>> {
    a.eigenvalues().map_err(|e| Error::Linalg(format!("{e:?}")))
}

/// Eigenvalues and unit-norm eigenvectors (as columns).
pub fn eigen_complex(a: &Mat<c64>) -> Result<(Vec<Complex64>, Mat<c64>)> {
    let evd = a.eigen().map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let s = evd.S();
    let vals = (0..s.dim()).map(|i| s[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn mat_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_small_system() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { 4.0 } else { 1.0 / (1 + i + j) as f64 });
        let x0 = [1.0, -2.0, 0.5];
        let b = mat_vec(&a, &x0);
        let x = lu_solve(&a, &b).unwrap();
        for i in 0..3 {
            assert!((x[i] - x0[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn lu_rejects_singular() {
        let a = Mat::from_fn(3, 3, |i, _| i as f64);
        assert!(matches!(lu_solve(&a, &[1.0, 1.0, 1.0]), Err(Error::SingularJacobian { .. })));
    }

    #[test]
    fn truncated_svd_gives_minimum_norm_solution() {
        let a = Mat::from_fn(2, 2, |_, _| 1.0);
        let x = truncated_svd_solve(&a, &[2.0, 2.0], 1e-12).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rotation_eigenvalues() {
        let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => -1.0,
            (1, 0) => 1.0,
            _ => 0.0,
        });
        let mut ev = eigenvalues_real(&a).unwrap();
        ev.sort_by(|x, y| x.im.total_cmp(&y.im));
        assert!((ev[0] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
        assert!((ev[1] - Complex64::new(0.0, 1.0)).norm() < 1e-14);
    }
}
