//! Small dense helpers on top of nalgebra.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;

use crate::{CMatrix, C64};

/// Mixing weights for the Hermitian functions `Re U + a Im U` used to split eigenspaces.
const MIXERS: [f64; 3] = [0.618_033_988_749_895, -1.324_717_957_244_746, 3.141_592_653_589_793e-1];

/// Eigen-decomposition of a unitary (normal) matrix.
///
/// `Re U + a Im U` is Hermitian and a function of `U`, so each of its eigenspaces is a sum of
/// eigenspaces of `U`. Clusters of equal Hermitian eigenvalues are split again with another
/// weight; what survives every weight is a genuine degeneracy, where any orthonormal basis
/// works. Eigenvalues are the Rayleigh quotients of the resulting orthonormal vectors.
pub fn unitary_eigen(u: &CMatrix) -> (Vec<C64>, CMatrix) {
    let n = u.nrows();
    let mut basis = CMatrix::identity(n, n);
    split(u, &mut basis, 0);
    let vals = (0..n).map(|i| (basis.column(i).adjoint() * u * basis.column(i))[(0, 0)]).collect();
    (vals, basis)
}

fn split(u: &CMatrix, basis: &mut CMatrix, level: usize) {
    if basis.ncols() < 2 || level == MIXERS.len() {
        return;
    }
    let a = MIXERS[level];
    let b = basis.adjoint() * u * &*basis;
    let h = (&b + b.adjoint()).map(|z| z * 0.5) + (&b - b.adjoint()).map(|z| z * C64::new(0.0, -0.5 * a));
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let v = CMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    let mut rotated = &*basis * v;
    let tol = 1e-9 * (1.0 + a.abs());
    let mut start = 0;
    for end in 1..=order.len() {
        if end == order.len() || eig.eigenvalues[order[end]] - eig.eigenvalues[order[end - 1]] > tol {
            if end - start > 1 {
                let mut block = rotated.columns(start, end - start).into_owned();
                split(u, &mut block, level + 1);
                rotated.columns_mut(start, end - start).copy_from(&block);
            }
            start = end;
        }
    }
    *basis = rotated;
}

/// Quasienergy of an eigenvalue `e^{-iE}` in the window `(shift - pi, shift + pi]`.
pub fn quasienergy(lambda: C64, shift: f64) -> f64 {
    let mut r = -(lambda * C64::from_polar(1.0, shift)).arg();
    if r <= -PI {
        r += 2.0 * PI;
    }
    shift + r
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |U^dagger U - I|`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Sorted eigenphases of a unitary in `(shift - pi, shift + pi]`.
pub fn eigenphases(u: &CMatrix, shift: f64) -> Vec<f64> {
    let (vals, _) = unitary_eigen(u);
    let mut e: Vec<f64> = vals.into_iter().map(|l| quasienergy(l, shift)).collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Distance between two multisets of phases on the circle, after sorting both.
pub fn phase_multiset_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| {
        let mut w: Vec<f64> = v.iter().map(|&x| wrap_angle(x)).collect();
        w.sort_by(f64::total_cmp);
        w
    };
    let (a, b) = (norm(a), norm(b));
    // circular matching: try every rotation of the sorted lists
    let n = a.len();
    (0..n)
        .map(|r| {
            (0..n)
                .map(|i| wrap_angle(a[i] - b[(i + r) % n]).abs())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quasienergy_window() {
        let minus_one = C64::new(-1.0, 0.0);
        assert!((quasienergy(minus_one, 0.0) - PI).abs() < 1e-15);
        let l = C64::from_polar(1.0, -0.3);
        assert!((quasienergy(l, 0.0) - 0.3).abs() < 1e-15);
        assert!((quasienergy(l, 2.0 * PI) - (0.3 + 2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn eigen_handles_degenerate_unitary() {
        let u = CMatrix::identity(4, 4) * C64::new(0.0, 1.0);
        let (vals, q) = unitary_eigen(&u);
        assert!(vals.iter().all(|v| (v - C64::new(0.0, 1.0)).norm() < 1e-14));
        assert!(unitarity_defect(&q) < 1e-14);
    }

    #[test]
    fn eigen_separates_mirror_pairs() {
        // eigenphases symmetric about the first mixer's axis collide in `Re U + a Im U`
        let t0 = MIXERS[0].atan();
        let d = [t0 + 0.4, t0 - 0.4, 1.0, 1.0];
        let u = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(4, d.iter().map(|&t| C64::from_polar(1.0, t))));
        let (vals, q) = unitary_eigen(&u);
        assert!(max_abs(&(&u * &q - &q * CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals)))) < 1e-13);
    }

    #[test]
    fn multiset_distance_is_rotation_aware() {
        let a = [PI - 1e-13, 0.1];
        let b = [0.1, -PI + 1e-13];
        assert!(phase_multiset_distance(&a, &b) < 1e-12);
    }
}
