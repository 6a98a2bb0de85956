//! Symmetric solves: Cholesky with an explicit ridge, and an
//! eigendecomposition-based Moore–Penrose pseudoinverse.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{check_len, ObserverError, Result};
use crate::kernels::dot;

/// A pivot is rejected when the Schur complement it represents is at most
/// this fraction of the corresponding (ridged) diagonal entry.
pub const PIVOT_REL_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor of `a + ridge·I`, stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: ArrayView2<'_, f64>, ridge: f64) -> Result<Self> {
        let n = a.nrows();
        check_len("matrix columns", n, a.ncols())?;
        if !(ridge >= 0.0) {
            return Err(ObserverError::validation("ridge must be nonnegative"));
        }
        let mut l = vec![0.0; n * n];
        let mut lj = Vec::with_capacity(n);
        for j in 0..n {
            let diag = a[[j, j]] + ridge;
            lj.clear();
            lj.extend_from_slice(&l[j * n..j * n + j]);
            let pivot = diag - dot(&lj, &lj);
            if !(pivot > PIVOT_REL_TOL * diag.abs()) || !pivot.is_finite() {
                return Err(ObserverError::Singular { minor: j, pivot });
            }
            let ljj = pivot.sqrt();
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let v = (a[[i, j]] - dot(&l[i * n..i * n + j], &lj)) / ljj;
                l[i * n + j] = v;
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let n = self.n;
        check_len("right-hand side", n, rhs.len())?;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            y[i] = (y[i] - dot(row, &y[..i])) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        Ok(Array1::from(y))
    }

    pub fn inverse(&self) -> Array2<f64> {
        let n = self.n;
        let mut inv = Array2::zeros((n, n));
        let mut e = Array1::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            inv.column_mut(j).assign(&self.solve(e.view()).expect("square"));
            e[j] = 0.0;
        }
        inv
    }
}

/// Solves `(a + ridge·I) x = rhs` through a Cholesky factorization.
pub fn symmetric_solve(a: ArrayView2<'_, f64>, rhs: ArrayView1<'_, f64>, ridge: f64) -> Result<Array1<f64>> {
    check_len("right-hand side", a.nrows(), rhs.len())?;
    Cholesky::factor(a, ridge)?.solve(rhs)
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
pub struct SymmetricEigenDecomposition {
    pub values: Array1<f64>,
    /// Columns are eigenvectors.
    pub vectors: Array2<f64>,
}

pub fn symmetric_eigen(a: ArrayView2<'_, f64>) -> Result<SymmetricEigenDecomposition> {
    let n = a.nrows();
    check_len("matrix columns", n, a.ncols())?;
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
    let values = Array1::from_iter(order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    Ok(SymmetricEigenDecomposition { values, vectors })
}

/// `A⁺·rhs`, discarding eigen-directions with |λ| < rank_tol·max|λ|.
pub fn pseudo_solve(a: ArrayView2<'_, f64>, rhs: ArrayView1<'_, f64>, rank_tol: f64) -> Result<Array1<f64>> {
    check_len("right-hand side", a.nrows(), rhs.len())?;
    let eig = symmetric_eigen(a)?;
    let max_abs = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = rank_tol * max_abs;
    let mut x = Array1::zeros(rhs.len());
    if max_abs == 0.0 {
        return Ok(x);
    }
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda.abs() >= cutoff && lambda != 0.0 {
            let q = eig.vectors.column(k);
            let coeff = q.dot(&rhs) / lambda;
            x.scaled_add(coeff, &q);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_spd(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = Array2::from_shape_fn((n, n), |_| StandardNormal.sample(&mut rng));
        b.dot(&b.t()) + Array2::<f64>::eye(n) * n as f64
    }

    fn norm(v: &Array1<f64>) -> f64 {
        v.dot(v).sqrt()
    }

    #[test]
    fn identity_and_diagonal() {
        let x = symmetric_solve(Array2::<f64>::eye(2).view(), array![3.0, -1.0].view(), 0.0).unwrap();
        assert_eq!(x, array![3.0, -1.0]);
        let x = symmetric_solve(array![[2.0, 0.0], [0.0, 4.0]].view(), array![2.0, 4.0].view(), 0.0).unwrap();
        assert!(norm(&(x - array![1.0, 1.0])) < 1e-15);
    }

    #[test]
    fn random_spd_residual() {
        let a = random_spd(6, 1);
        let b = array![1.0, -2.0, 0.5, 3.0, 0.0, 1.5];
        let x = symmetric_solve(a.view(), b.view(), 0.0).unwrap();
        let r = a.dot(&x) - &b;
        assert!(norm(&r) < 1e-10 * norm(&b));
    }

    #[test]
    fn ridge_is_added_to_diagonal() {
        let a = array![[1.0, 0.0], [0.0, 0.0]];
        assert!(symmetric_solve(a.view(), array![1.0, 1.0].view(), 0.0).is_err());
        let x = symmetric_solve(a.view(), array![2.0, 1.0].view(), 1.0).unwrap();
        assert!(norm(&(x - array![1.0, 1.0])) < 1e-15);
    }

    #[test]
    fn indefinite_names_leading_minor() {
        let a = array![[4.0, 0.0, 0.0], [0.0, 1.0, 2.0], [0.0, 2.0, 1.0]];
        match symmetric_solve(a.view(), array![1.0, 1.0, 1.0].view(), 0.0) {
            Err(ObserverError::Singular { minor, .. }) => assert_eq!(minor, 2),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn pseudo_discards_null_space() {
        let x = pseudo_solve(array![[1.0, 0.0], [0.0, 0.0]].view(), array![2.0, 5.0].view(), 1e-10).unwrap();
        assert_eq!(x, array![2.0, 0.0]);
    }

    #[test]
    fn pseudo_matches_cholesky_on_full_rank() {
        let a = random_spd(8, 7);
        let b = Array1::from_shape_fn(8, |i| (i as f64).sin());
        let x1 = symmetric_solve(a.view(), b.view(), 0.0).unwrap();
        let x2 = pseudo_solve(a.view(), b.view(), 1e-12).unwrap();
        assert!(norm(&(&x1 - &x2)) < 1e-8 * norm(&x1));
    }

    #[test]
    fn pseudo_rank_one_projector() {
        let u = array![0.6, 0.0, 0.8];
        let a = Array2::from_shape_fn((3, 3), |(i, j)| u[i] * u[j]);
        let x = pseudo_solve(a.view(), u.view(), 1e-10).unwrap();
        assert!(norm(&(&x - &u)) < 1e-12);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = random_spd(5, 3);
        let inv = Cholesky::factor(a.view(), 0.0).unwrap().inverse();
        let err = (inv.dot(&a) - Array2::<f64>::eye(5)).mapv(f64::abs).sum();
        assert!(err < 1e-12);
    }
}
