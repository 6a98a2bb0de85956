//! Inverse of a growing symmetric matrix, extended one row/column at a time
//! through the block-inversion identity:
//!
//! ```text
//! [ K   c ]⁻¹   [ K⁻¹ + b bᵀ/s   −b/s ]
//! [ cᵀ  v ]   = [ −bᵀ/s           1/s ],   b = K⁻¹c,  s = v − cᵀb
//! ```

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::error::{check_len, ObserverError, Result};

/// Default threshold on the Schur complement, relative to the new variance.
pub const DEFAULT_SCHUR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalInverse {
    inv: Array2<f64>,
}

impl Default for IncrementalInverse {
    fn default() -> Self {
        Self::new()
    }
}

impl IncrementalInverse {
    /// The 0×0 starting state.
    pub fn new() -> Self {
        IncrementalInverse {
            inv: Array2::zeros((0, 0)),
        }
    }

    pub fn dim(&self) -> usize {
        self.inv.nrows()
    }

    pub fn inverse(&self) -> &Array2<f64> {
        &self.inv
    }

    /// inv · x
    pub fn apply(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.inv.dot(&x)
    }

    /// Schur complement `new_var − crossᵀ K⁻¹ cross` and `b = K⁻¹ cross`.
    pub fn schur(&self, cross_cov: ArrayView1<'_, f64>, new_var: f64) -> Result<(f64, Array1<f64>)> {
        check_len("cross covariance", self.dim(), cross_cov.len())?;
        let b = self.inv.dot(&cross_cov);
        Ok((new_var - cross_cov.dot(&b), b))
    }

    /// Extends in place; O(i²). Fails with [`ObserverError::DegenerateChannel`]
    /// when the Schur complement is at most `rel_tol · new_var`.
    pub fn push(&mut self, cross_cov: ArrayView1<'_, f64>, new_var: f64, rel_tol: f64) -> Result<()> {
        let (schur, b) = self.schur(cross_cov, new_var)?;
        let tol = rel_tol * new_var.abs();
        if !(schur > tol) || !schur.is_finite() {
            return Err(ObserverError::DegenerateChannel { schur, tol });
        }
        let i = self.dim();
        let mut next = Array2::zeros((i + 1, i + 1));
        {
            let mut top = next.slice_mut(s![..i, ..i]);
            top.assign(&self.inv);
            for r in 0..i {
                let br = b[r] / schur;
                for c in 0..i {
                    top[[r, c]] += br * b[c];
                }
            }
        }
        for r in 0..i {
            let v = -b[r] / schur;
            next[[r, i]] = v;
            next[[i, r]] = v;
        }
        next[[i, i]] = 1.0 / schur;
        self.inv = next;
        Ok(())
    }
}

/// Functional form of [`IncrementalInverse::push`] with the default tolerance.
pub fn block_inverse_extend(
    state: &IncrementalInverse,
    cross_cov: ArrayView1<'_, f64>,
    new_var: f64,
) -> Result<IncrementalInverse> {
    let mut next = state.clone();
    next.push(cross_cov, new_var, DEFAULT_SCHUR_TOL)?;
    Ok(next)
}
