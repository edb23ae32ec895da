//! Small dense complex kernels.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{abs2, cplx, to_f64, Complex, Real};

/// Eigenpairs of a Hermitian matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct HermitianEigen<T: Real> {
    pub eigenvalues: Vec<T>,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DMatrix<Complex<T>>,
}

pub fn hermitian_eigen<T: Real>(matrix: &DMatrix<Complex<T>>) -> Result<HermitianEigen<T>> {
    if !matrix.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition of a {:?} matrix",
            matrix.shape()
        )));
    }
    let n = matrix.nrows();
    // symmetrize so round-off asymmetry does not leak into the solver
    let sym = DMatrix::from_fn(n, n, |i, j| {
        (matrix[(i, j)] + matrix[(j, i)].conj()) * cplx(crate::scalar::lit(0.5), T::zero())
    });
    let eig = SymmetricEigen::try_new(sym, T::default_epsilon(), 0).ok_or(Error::Eigen)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermitianEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Lower Cholesky factor of a Hermitian positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T: Real> {
    lower: DMatrix<Complex<T>>,
}

impl<T: Real> Cholesky<T> {
    /// `None` when a pivot is not strictly positive.
    pub fn new(a: &DMatrix<Complex<T>>) -> Option<Self> {
        let n = a.nrows();
        let mut l = DMatrix::<Complex<T>>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= abs2(l[(j, k)]);
            }
            if !(d > T::zero()) {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = cplx(djj, T::zero());
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s.unscale(djj);
            }
        }
        Some(Self { lower: l })
    }

    /// Cheap condition estimate `(max l_ii / min l_ii)²`, a lower bound on the 2-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let diag: Vec<f64> = (0..self.lower.nrows())
            .map(|i| to_f64(self.lower[(i, i)].re))
            .collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        (max / min).powi(2)
    }

    pub fn solve(&self, rhs: &DVector<Complex<T>>) -> DVector<Complex<T>> {
        let n = self.lower.nrows();
        let l = &self.lower;
        let mut y = rhs.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s.unscale(l[(i, i)].re);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[(k, i)].conj() * y[k];
            }
            y[i] = s.unscale(l[(i, i)].re);
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_hermitian(n: usize, vals: &[f64]) -> DMatrix<Complex<f64>> {
        let b = DMatrix::from_fn(n, n, |i, j| {
            Complex::new(
                vals[(i * n + j) % vals.len()],
                vals[(j * 7 + i * 3) % vals.len()],
            )
        });
        &b * b.adjoint()
    }

    #[test]
    fn diagonal_eigen_sorted() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex::new(2.0, 0.0),
            Complex::new(0.0, 0.0),
            Complex::new(3.0, 0.0),
            Complex::new(0.0, 0.0),
        ]));
        let e = hermitian_eigen(&d).unwrap();
        assert_eq!(e.eigenvalues, vec![3.0, 2.0, 0.0, 0.0]);
        assert!((e.eigenvectors[(2, 0)].norm() - 1.0f64).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn eigen_residual_within_contract(vals in prop::collection::vec(-1.0f64..1.0, 64)) {
            let r = random_hermitian(8, &vals);
            let e = hermitian_eigen(&r).unwrap();
            let scale = r.norm();
            for (i, &lam) in e.eigenvalues.iter().enumerate() {
                let v = e.eigenvectors.column(i);
                let res = (&r * v - v * Complex::new(lam, 0.0)).norm();
                prop_assert!(res <= 1e-12 * scale.max(1.0));
            }
            let gram = e.eigenvectors.adjoint() * &e.eigenvectors;
            prop_assert!((gram - DMatrix::identity(8, 8)).norm() < 1e-12);
            prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn cholesky_solves(vals in prop::collection::vec(-1.0f64..1.0, 16)) {
            let a = random_hermitian(3, &vals) + DMatrix::identity(3, 3) * Complex::new(0.5, 0.0);
            let x = DVector::from_vec(vec![Complex::new(1.0, -2.0), Complex::new(0.5, 0.25), Complex::new(-1.0, 0.0)]);
            let b = &a * &x;
            let ch = Cholesky::new(&a).unwrap();
            prop_assert!((ch.solve(&b) - x).norm() < 1e-9);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex::new(1.0, 0.0),
                Complex::new(2.0, 0.0),
                Complex::new(2.0, 0.0),
                Complex::new(1.0, 0.0),
            ],
        );
        assert!(Cholesky::new(&a).is_none());
    }
}
