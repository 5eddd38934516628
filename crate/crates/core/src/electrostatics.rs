// Copyright 2026 jjchain contributors
// SPDX-License-Identifier: Apache-2.0

//! Island electrostatics of a uniform one-dimensional charge-qubit chain.
//!
//! Each island sees a gate/ground capacitance `C0` and couples to its
//! nearest neighbours through junction capacitances `C`. In units of `C0`
//! the chain capacitance matrix is tridiagonal:
//!
//! ```text
//! M[i][i]   = 1 + n_i * c_ratio      n_i = number of junction neighbours
//! M[i][i±1] = -c_ratio
//! ```
//!
//! with `c_ratio = C / C0`. Boundary islands have a single neighbour, so
//! their diagonal is `1 + c_ratio`; the ground capacitance is the same for
//! every island. `M` is symmetric, strictly diagonally dominant and hence
//! positive definite, and its inverse `W = M^-1` has strictly positive
//! entries that decay exponentially away from the diagonal. The decay
//! length (the interaction range of the screened charge-charge coupling)
//! grows like `sqrt(c_ratio)` once `c_ratio >> 1`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::float::{real, real_of, Float};

/// Chain capacitance matrix and its inverse, in units of the ground
/// capacitance `C0`.
#[derive(Debug, Clone)]
pub struct CapacitanceModel<T: Float> {
    c_ratio: T,
    matrix: DMatrix<T>,
    inverse: DMatrix<T>,
}

impl<T: Float> CapacitanceModel<T> {
    /// Builds the tridiagonal capacitance matrix for `length` islands and
    /// inverts it.
    ///
    /// Fails if `length == 0`, if `c_ratio` is negative or non-finite, or if
    /// the inverse does not reproduce the identity to working precision.
    pub fn build(length: usize, c_ratio: T) -> Result<Self> {
        if length == 0 {
            return Err(Error::InvalidParameter(
                "chain length must be at least 1".into(),
            ));
        }
        if !c_ratio.is_finite() || c_ratio < T::zero() {
            return Err(Error::InvalidParameter(format!(
                "c_ratio must be finite and non-negative, got {c_ratio}"
            )));
        }

        let mut matrix = DMatrix::<T>::zeros(length, length);
        for i in 0..length {
            let neighbours = if length == 1 {
                0
            } else if i == 0 || i == length - 1 {
                1
            } else {
                2
            };
            matrix[(i, i)] = T::one() + real_of::<T>(neighbours) * c_ratio;
            if i + 1 < length {
                matrix[(i, i + 1)] = -c_ratio;
                matrix[(i + 1, i)] = -c_ratio;
            }
        }

        let chol = nalgebra::Cholesky::new(matrix.clone()).ok_or_else(|| {
            Error::NumericalFailure("capacitance matrix is not positive definite".into())
        })?;
        let mut inverse = chol.inverse();
        // The factorization returns a numerically symmetric inverse; make the
        // symmetry exact so downstream reflection checks are clean.
        for i in 0..length {
            for j in (i + 1)..length {
                let avg = (inverse[(i, j)] + inverse[(j, i)]) * real::<T>(0.5);
                inverse[(i, j)] = avg;
                inverse[(j, i)] = avg;
            }
        }

        let residual = (&matrix * &inverse - DMatrix::<T>::identity(length, length))
            .iter()
            .fold(T::zero(), |acc, x| acc.max(x.abs()));
        let tol = T::epsilon() * real_of::<T>(length * 100);
        if residual > tol {
            return Err(Error::NumericalFailure(format!(
                "capacitance inversion residual {residual} exceeds {tol}"
            )));
        }

        Ok(Self {
            c_ratio,
            matrix,
            inverse,
        })
    }

    pub fn length(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn c_ratio(&self) -> T {
        self.c_ratio
    }

    /// Capacitance matrix `M` in units of `C0`.
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    /// Inverse capacitance matrix `W = M^-1` in units of `1/C0`.
    pub fn inverse(&self) -> &DMatrix<T> {
        &self.inverse
    }

    /// Screening length of the inter-island coupling, in lattice spacings.
    ///
    /// Fits `log W[mid][mid+k]` linearly in `k` over interior separations
    /// around the central island and returns the negative inverse slope. The
    /// fit window stays within half of the distance to the boundary so open
    /// ends do not contaminate the bulk decay. Requires `length >= 5` so at
    /// least three separations enter the fit, and `c_ratio > 0` so the
    /// off-diagonal entries are nonzero.
    pub fn interaction_range(&self) -> Result<T> {
        let length = self.length();
        if length < 5 {
            return Err(Error::InvalidParameter(format!(
                "interaction range needs length >= 5, got {length}"
            )));
        }
        if self.c_ratio <= T::zero() {
            return Err(Error::InvalidParameter(
                "interaction range undefined for c_ratio = 0".into(),
            ));
        }

        let mid = (length - 1) / 2;
        let k_max = ((length - 1 - mid) / 2).max(2);
        let mut ks = Vec::with_capacity(k_max + 1);
        let mut logs = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            let w = self.inverse[(mid, mid + k)];
            if w > T::zero() && w.is_finite() {
                ks.push(real_of::<T>(k));
                logs.push(w.ln());
            }
        }
        if ks.len() < 3 {
            return Err(Error::NumericalFailure(
                "too few usable off-diagonal entries for range fit".into(),
            ));
        }

        let n = real_of::<T>(ks.len());
        let k_mean = ks.iter().fold(T::zero(), |a, &k| a + k) / n;
        let log_mean = logs.iter().fold(T::zero(), |a, &y| a + y) / n;
        let mut cov = T::zero();
        let mut var = T::zero();
        for (&k, &y) in ks.iter().zip(&logs) {
            cov += (k - k_mean) * (y - log_mean);
            var += (k - k_mean) * (k - k_mean);
        }
        let slope = cov / var;
        if !slope.is_finite() || slope >= T::zero() {
            return Err(Error::NumericalFailure(format!(
                "range fit produced non-decaying slope {slope}"
            )));
        }
        Ok(-slope.recip())
    }
}
