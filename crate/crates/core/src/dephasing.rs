// Copyright 2026 jjchain contributors
// SPDX-License-Identifier: Apache-2.0

//! Gate-noise dephasing of the transferred pair.
//!
//! Gate-voltage fluctuations enter the chain through the inverse capacitance
//! matrix, so islands dephase in a correlated way: the rate matrix is
//! `D = (gamma/2) W^2` and the density matrix obeys
//!
//! ```text
//! rho' = -i [H, rho] - sum_ij D_ij (P_i P_j rho - 2 P_i rho P_j + rho P_i P_j)
//! ```
//!
//! with `P_i` the pair projector on island `i`, over the basis
//! `{vac, 1..L}`. Populations relax toward the uniform charge distribution
//! and the Bloch-averaged fidelity toward `1/2 + 1/(6L)`.
//!
//! The fidelity of a noisy run is reconstructed from one evolution. Because
//! the generator never mixes the vacuum-charge coherence column with the
//! charge block, a single run with known overlaps on vacuum and island 1
//! determines the population gain `E(t) = rho_LL(t) / rho_11(0)` and the
//! coherence gain `w(t) = rho_{L,vac}(t) / rho_{1,vac}(0)` of every Bloch
//! preparation at once, and the sphere average collapses to
//! `F = 1/2 + E/6 + Re(w)/3`.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::electrostatics::CapacitanceModel;
use crate::error::{Error, Result};
use crate::float::{real, real_of, Float};
use crate::hamiltonian::ChargeSectorHamiltonian;

/// Basis layout of a stored density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateBasis {
    /// `{vac, site 1..L}`: dimension `L + 1`.
    Chain,
    /// `{vac, qp, site 1..L}`: dimension `L + 2`.
    Readout,
}

fn hermiticity_tol<T: Float>() -> T {
    real::<T>(1e-12).max(T::epsilon() * real::<T>(100.0))
}

fn trace_tol<T: Float>() -> T {
    real::<T>(1e-10).max(T::epsilon() * real::<T>(1000.0))
}

fn positivity_tol<T: Float>() -> T {
    real::<T>(1e-9).max(T::epsilon() * real::<T>(10000.0))
}

/// Validated density matrix snapshot.
#[derive(Debug, Clone)]
pub struct DensityMatrix<T: Float> {
    basis: StateBasis,
    matrix: DMatrix<Complex<T>>,
}

impl<T: Float> DensityMatrix<T> {
    /// Wraps and validates an explicit matrix.
    pub fn from_matrix(basis: StateBasis, matrix: DMatrix<Complex<T>>) -> Result<Self> {
        let state = Self { basis, matrix };
        state.validate()?;
        Ok(state)
    }

    /// Pure Bloch preparation `cos(theta/2)|vac> + e^{i phi} sin(theta/2)|1>`
    /// on a chain of `length` islands.
    pub fn from_bloch(length: usize, theta: T, phi: T) -> Result<Self> {
        if length == 0 {
            return Err(Error::InvalidParameter(
                "chain length must be at least 1".into(),
            ));
        }
        if !theta.is_finite() || !phi.is_finite() {
            return Err(Error::InvalidParameter(
                "Bloch angles must be finite".into(),
            ));
        }
        let half = real::<T>(0.5);
        let c = (theta * half).cos();
        let s = (theta * half).sin();
        let vac = Complex::new(c, T::zero());
        let site = Complex::new(phi.cos(), phi.sin()) * s;

        let dim = length + 1;
        let mut rho = DMatrix::from_element(dim, dim, Complex::new(T::zero(), T::zero()));
        rho[(0, 0)] = vac * vac.conj();
        rho[(0, 1)] = vac * site.conj();
        rho[(1, 0)] = site * vac.conj();
        rho[(1, 1)] = site * site.conj();
        Ok(Self {
            basis: StateBasis::Chain,
            matrix: rho,
        })
    }

    pub(crate) fn from_checked(basis: StateBasis, matrix: DMatrix<Complex<T>>) -> Self {
        Self { basis, matrix }
    }

    pub fn basis(&self) -> StateBasis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of islands implied by the basis layout.
    pub fn islands(&self) -> usize {
        match self.basis {
            StateBasis::Chain => self.dim() - 1,
            StateBasis::Readout => self.dim() - 2,
        }
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.matrix
    }

    /// Largest elementwise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> T {
        let adj = self.matrix.adjoint();
        let mut worst = T::zero();
        for (a, b) in self.matrix.iter().zip(adj.iter()) {
            let d = *a - *b;
            worst = worst.max(d.norm_sqr().sqrt());
        }
        worst
    }

    /// Deviation of the trace from one.
    pub fn trace_error(&self) -> T {
        let tr = self.matrix.trace();
        ((tr.re - T::one()) * (tr.re - T::one()) + tr.im * tr.im).sqrt()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> T {
        self.matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(T::one(), |acc, &x| acc.min(x))
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.matrix.nrows();
        if dim != self.matrix.ncols() {
            return Err(Error::InvalidParameter(
                "density matrix must be square".into(),
            ));
        }
        let min_dim = match self.basis {
            StateBasis::Chain => 2,
            StateBasis::Readout => 3,
        };
        if dim < min_dim {
            return Err(Error::InvalidParameter(format!(
                "density matrix dimension {dim} too small for its basis"
            )));
        }
        let herm = self.hermiticity_error();
        if herm > hermiticity_tol::<T>() {
            return Err(Error::NumericalFailure(format!(
                "density matrix not Hermitian, deviation {herm}"
            )));
        }
        let drift = self.trace_error();
        if drift > trace_tol::<T>() {
            return Err(Error::NumericalFailure(format!(
                "density matrix trace off by {drift}"
            )));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < -positivity_tol::<T>() {
            return Err(Error::NumericalFailure(format!(
                "density matrix not positive, smallest eigenvalue {min_eig}"
            )));
        }
        Ok(())
    }
}

/// Pairwise dephasing rates `D = (gamma/2) W^2`.
#[derive(Debug, Clone)]
pub struct DephasingRates<T: Float> {
    gamma: T,
    d: DMatrix<T>,
}

impl<T: Float> DephasingRates<T> {
    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.d
    }

    pub fn length(&self) -> usize {
        self.d.nrows()
    }
}

/// Builds the rate matrix for noise strength `gamma` on a given chain.
///
/// Positive semidefiniteness is asserted rather than assumed: `D` inherits
/// it from `W`, and a PSD rate matrix is what guarantees the dissipator is
/// completely positive.
pub fn build_dephasing_rates<T: Float>(
    gamma: T,
    model: &CapacitanceModel<T>,
) -> Result<DephasingRates<T>> {
    if !gamma.is_finite() || gamma < T::zero() {
        return Err(Error::InvalidParameter(format!(
            "gamma must be finite and non-negative, got {gamma}"
        )));
    }
    let w = model.inverse();
    let d = (w * w) * (gamma * real::<T>(0.5));
    let psd_tol = real::<T>(1e-12).max(T::epsilon() * real::<T>(100.0));
    let min_eig = d
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(T::zero(), |acc, &x| acc.min(x));
    if min_eig < -psd_tol {
        return Err(Error::NumericalFailure(format!(
            "rate matrix lost positive semidefiniteness, eigenvalue {min_eig}"
        )));
    }
    Ok(DephasingRates { gamma, d })
}

/// Embeds the charge-sector Hamiltonian into the `{vac, 1..L}` space.
fn embed_hamiltonian<T: Float>(h: &ChargeSectorHamiltonian<T>) -> DMatrix<Complex<T>> {
    let l = h.length();
    let zero = Complex::new(T::zero(), T::zero());
    let mut full = DMatrix::from_element(l + 1, l + 1, zero);
    let m = h.matrix();
    for i in 0..l {
        for j in 0..l {
            full[(i + 1, j + 1)] = Complex::new(m[(i, j)], T::zero());
        }
    }
    full
}

/// Elementwise damping rates over the `{vac, 1..L}` basis. Entry `(a, b)`
/// multiplies `rho_ab` in the dissipator; populations are untouched.
fn damping_table<T: Float>(d: &DMatrix<T>) -> DMatrix<T> {
    let l = d.nrows();
    let mut damp = DMatrix::zeros(l + 1, l + 1);
    for a in 0..=l {
        for b in 0..=l {
            damp[(a, b)] = match (a, b) {
                (0, 0) => T::zero(),
                (a, 0) => d[(a - 1, a - 1)],
                (0, b) => d[(b - 1, b - 1)],
                (a, b) => {
                    d[(a - 1, a - 1)] + d[(b - 1, b - 1)] - real::<T>(2.0) * d[(a - 1, b - 1)]
                }
            };
        }
    }
    damp
}

fn rhs_raw<T: Float>(
    h_full: &DMatrix<Complex<T>>,
    damp: &DMatrix<T>,
    rho: &DMatrix<Complex<T>>,
) -> DMatrix<Complex<T>> {
    let minus_i = Complex::new(T::zero(), -T::one());
    let mut out = (h_full * rho - rho * h_full) * minus_i;
    for a in 0..rho.nrows() {
        for b in 0..rho.ncols() {
            out[(a, b)] -= rho[(a, b)] * damp[(a, b)];
        }
    }
    out
}

/// Right-hand side of the dephasing master equation. The derivative is
/// Hermitian and traceless for any Hermitian input.
pub fn dephasing_rhs<T: Float>(
    rho: &DensityMatrix<T>,
    hamiltonian: &ChargeSectorHamiltonian<T>,
    rates: &DephasingRates<T>,
) -> Result<DMatrix<Complex<T>>> {
    let l = hamiltonian.length();
    if rho.basis() != StateBasis::Chain || rho.dim() != l + 1 {
        return Err(Error::DimensionMismatch {
            what: "density matrix",
            expected: l + 1,
            got: rho.dim(),
        });
    }
    if rates.length() != l {
        return Err(Error::DimensionMismatch {
            what: "dephasing rates",
            expected: l,
            got: rates.length(),
        });
    }
    let h_full = embed_hamiltonian(hamiltonian);
    let damp = damping_table(rates.matrix());
    Ok(rhs_raw(&h_full, &damp, rho.matrix()))
}

/// Recorded time series of a dephasing run.
///
/// Scalar columns follow the recorded grid; `states` holds the matching
/// density-matrix snapshots. The fidelity column is the Bloch-sphere
/// average reconstructed from the run's channel gains.
#[derive(Debug, Clone)]
pub struct DephasingRun<T: Float> {
    pub times: Vec<T>,
    pub fidelity: Vec<T>,
    pub rho_ll: Vec<T>,
    pub rho_11: Vec<T>,
    /// Raw vacuum coherence of the receiving island, `rho_{L,vac}(t)`.
    pub coherence: Vec<Complex<T>>,
    pub trace_error: Vec<T>,
    pub min_eigenvalue: Vec<T>,
    pub states: Vec<DensityMatrix<T>>,
}

impl<T: Float> DephasingRun<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &DensityMatrix<T> {
        self.states.last().expect("run records at least t = 0")
    }
}

/// Sphere-averaged fidelity from the channel gains of one run.
pub fn fidelity_from_channel<T: Float>(population_gain: T, coherence_gain: Complex<T>) -> T {
    real::<T>(0.5) + population_gain / real::<T>(6.0) + coherence_gain.re / real::<T>(3.0)
}

/// Integrates the master equation with classical fixed-step fourth order.
///
/// Every step is checked: trace drift per step below 10^-10, Hermiticity,
/// trace, and positivity within the `DensityMatrix` tolerances. Columns and
/// snapshots are recorded every `stride` steps (and always at both ends).
/// The initial state must overlap both the vacuum and island 1, as the
/// Bloch preparations do; otherwise the fidelity reconstruction is
/// undefined and the run is rejected.
pub fn evolve_dephasing<T: Float>(
    rho0: &DensityMatrix<T>,
    hamiltonian: &ChargeSectorHamiltonian<T>,
    rates: &DephasingRates<T>,
    t_max: T,
    dt: T,
    stride: usize,
) -> Result<DephasingRun<T>> {
    let l = hamiltonian.length();
    if rho0.basis() != StateBasis::Chain || rho0.dim() != l + 1 {
        return Err(Error::DimensionMismatch {
            what: "initial density matrix",
            expected: l + 1,
            got: rho0.dim(),
        });
    }
    if rates.length() != l {
        return Err(Error::DimensionMismatch {
            what: "dephasing rates",
            expected: l,
            got: rates.length(),
        });
    }
    rho0.validate()?;
    if !dt.is_finite() || dt <= T::zero() {
        return Err(Error::InvalidParameter(format!(
            "dt must be finite and positive, got {dt}"
        )));
    }
    if !t_max.is_finite() || t_max < dt {
        return Err(Error::InvalidParameter(format!(
            "t_max must be finite and at least dt, got {t_max}"
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidParameter(
            "record stride must be at least 1".into(),
        ));
    }

    let seed_tol = real::<T>(1e-10);
    let population_seed = rho0.matrix()[(1, 1)].re;
    let coherence_seed = rho0.matrix()[(1, 0)];
    if population_seed < seed_tol || coherence_seed.norm_sqr().sqrt() < seed_tol {
        return Err(Error::InvalidParameter(
            "fidelity reconstruction needs overlap with both the vacuum and island 1; \
             use a Bloch preparation away from the poles"
                .into(),
        ));
    }

    let h_full = embed_hamiltonian(hamiltonian);
    let damp = damping_table(rates.matrix());
    let steps = (t_max.to_f64().expect("finite time") / dt.to_f64().expect("finite step")
        + 1e-9)
        .floor() as usize;

    let half = real::<T>(0.5);
    let sixth = real::<T>(1.0 / 6.0);
    let two = real::<T>(2.0);
    let drift_tol = trace_tol::<T>();
    let bound_tol = real::<T>(1e-10).max(T::epsilon() * real::<T>(100.0));
    let fid_lower = T::one() / real::<T>(3.0) - bound_tol;
    let fid_upper = T::one() + bound_tol;

    let mut rho = rho0.matrix().clone();
    let capacity = steps / stride + 2;
    let mut run = DephasingRun {
        times: Vec::with_capacity(capacity),
        fidelity: Vec::with_capacity(capacity),
        rho_ll: Vec::with_capacity(capacity),
        rho_11: Vec::with_capacity(capacity),
        coherence: Vec::with_capacity(capacity),
        trace_error: Vec::with_capacity(capacity),
        min_eigenvalue: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
    };

    for k in 0..=steps {
        let t = real_of::<T>(k) * dt;

        let snapshot = DensityMatrix::from_checked(StateBasis::Chain, rho.clone());
        let herm = snapshot.hermiticity_error();
        if herm > hermiticity_tol::<T>() {
            return Err(Error::NumericalFailure(format!(
                "Hermiticity lost at t = {t}, deviation {herm}; reduce dt"
            )));
        }
        let trace_err = snapshot.trace_error();
        if trace_err > trace_tol::<T>() {
            return Err(Error::NumericalFailure(format!(
                "trace drifted by {trace_err} at t = {t}; reduce dt"
            )));
        }
        let min_eig = snapshot.min_eigenvalue();
        if min_eig < -positivity_tol::<T>() {
            return Err(Error::NumericalFailure(format!(
                "positivity lost at t = {t}, smallest eigenvalue {min_eig}; reduce dt"
            )));
        }

        if k % stride == 0 || k == steps {
            let rho_ll = rho[(l, l)].re;
            let rho_11 = rho[(1, 1)].re;
            let coherence = rho[(l, 0)];
            let population_gain = rho_ll / population_seed;
            let coherence_gain = coherence / coherence_seed;
            let fidelity = fidelity_from_channel(population_gain, coherence_gain);
            if !(fid_lower..=fid_upper).contains(&fidelity) {
                return Err(Error::NumericalFailure(format!(
                    "reconstructed fidelity {fidelity} outside [1/3, 1] at t = {t}; reduce dt"
                )));
            }
            run.times.push(t);
            run.fidelity.push(fidelity);
            run.rho_ll.push(rho_ll);
            run.rho_11.push(rho_11);
            run.coherence.push(coherence);
            run.trace_error.push(trace_err);
            run.min_eigenvalue.push(min_eig);
            run.states.push(snapshot);
        }

        if k == steps {
            break;
        }

        let trace_before = rho.trace().re;
        let k1 = rhs_raw(&h_full, &damp, &rho);
        let k2 = rhs_raw(&h_full, &damp, &(&rho + &k1 * Complex::new(dt * half, T::zero())));
        let k3 = rhs_raw(&h_full, &damp, &(&rho + &k2 * Complex::new(dt * half, T::zero())));
        let k4 = rhs_raw(&h_full, &damp, &(&rho + &k3 * Complex::new(dt, T::zero())));
        let two_c = Complex::new(two, T::zero());
        rho += (k1 + k2 * two_c + k3 * two_c + k4) * Complex::new(dt * sixth, T::zero());

        let step_drift = (rho.trace().re - trace_before).abs();
        if step_drift > drift_tol {
            return Err(Error::NumericalFailure(format!(
                "trace drift {step_drift} in one step at t = {t}; reduce dt"
            )));
        }
        // Suppress roundoff asymmetry; the checks above ran on the raw state.
        let adj = rho.adjoint();
        rho = (rho + adj) * Complex::new(half, T::zero());
    }

    Ok(run)
}

/// Long-time limit of the Bloch-averaged fidelity, `1/2 + 1/(6L)`.
pub fn stationary_fidelity<T: Float>(length: usize) -> Result<T> {
    if length == 0 {
        return Err(Error::InvalidParameter(
            "chain length must be at least 1".into(),
        ));
    }
    Ok(real::<T>(0.5) + T::one() / (real::<T>(6.0) * real_of::<T>(length)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{build_hamiltonian, mix_seed, ChainParams};
    use crate::unitary::{fidelity_closed_form, TransferEvolution};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::{FRAC_PI_2, PI};

    type C64 = Complex64;

    fn chain(length: usize, u0: f64, c_ratio: f64) -> ChargeSectorHamiltonian<f64> {
        let params = ChainParams::uniform(length, u0, c_ratio);
        let model = CapacitanceModel::build(length, c_ratio).unwrap();
        build_hamiltonian(&params, &model).unwrap()
    }

    fn rates_for(length: usize, c_ratio: f64, gamma: f64) -> DephasingRates<f64> {
        let model = CapacitanceModel::build(length, c_ratio).unwrap();
        build_dephasing_rates(gamma, &model).unwrap()
    }

    #[test]
    fn rates_reference_cases() {
        let zero = rates_for(5, 0.1, 0.0);
        assert!(zero.matrix().iter().all(|&x| x == 0.0));

        let local = rates_for(4, 0.0, 0.3);
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 0.15 } else { 0.0 };
                assert_abs_diff_eq!(local.matrix()[(i, j)], expected, epsilon = 1e-14);
            }
        }

        let model = CapacitanceModel::build(7, 0.1).unwrap();
        let rates = build_dephasing_rates(0.02, &model).unwrap();
        let w = model.inverse();
        for i in 0..7 {
            for j in 0..7 {
                let mut square = 0.0;
                for k in 0..7 {
                    square += w[(i, k)] * w[(k, j)];
                }
                assert_abs_diff_eq!(rates.matrix()[(i, j)], 0.01 * square, epsilon = 1e-14);
            }
        }
        let min_eig = rates
            .matrix()
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::MAX, |a, &x| a.min(x));
        assert!(min_eig >= -1e-12);

        assert!(build_dephasing_rates(-0.1, &model).is_err());
    }

    #[test]
    fn rhs_is_hermitian_and_traceless() {
        let h = chain(4, 10.0, 0.2);
        let rates = rates_for(4, 0.2, 0.05);
        let rho = DensityMatrix::from_bloch(4, 1.1, 0.7).unwrap();
        let deriv = dephasing_rhs(&rho, &h, &rates).unwrap();

        let adj = deriv.adjoint();
        for (a, b) in deriv.iter().zip(adj.iter()) {
            assert!((a - b).norm_sqr().sqrt() < 1e-14);
        }
        let tr = deriv.trace();
        assert!(tr.norm_sqr().sqrt() < 1e-14);
    }

    #[test]
    fn rhs_rejects_mismatched_shapes() {
        let h = chain(4, 10.0, 0.2);
        let rates = rates_for(3, 0.2, 0.05);
        let rho = DensityMatrix::from_bloch(4, 1.1, 0.7).unwrap();
        assert!(dephasing_rhs(&rho, &h, &rates).is_err());
        let rho_small = DensityMatrix::from_bloch(3, 1.1, 0.7).unwrap();
        assert!(dephasing_rhs(&rho_small, &h, &rates_for(4, 0.2, 0.05)).is_err());
    }

    /// Local fixed-step integrator over the raw master equation, used by the
    /// oracle tests below so they do not depend on `evolve_dephasing`.
    fn integrate_raw(
        h: &ChargeSectorHamiltonian<f64>,
        rates: &DephasingRates<f64>,
        mut rho: DMatrix<C64>,
        t: f64,
        steps: usize,
    ) -> DMatrix<C64> {
        let h_full = embed_hamiltonian(h);
        let damp = damping_table(rates.matrix());
        let dt = t / steps as f64;
        for _ in 0..steps {
            let k1 = rhs_raw(&h_full, &damp, &rho);
            let k2 = rhs_raw(&h_full, &damp, &(&rho + &k1 * C64::new(dt / 2.0, 0.0)));
            let k3 = rhs_raw(&h_full, &damp, &(&rho + &k2 * C64::new(dt / 2.0, 0.0)));
            let k4 = rhs_raw(&h_full, &damp, &(&rho + &k3 * C64::new(dt, 0.0)));
            rho += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4)
                * C64::new(dt / 6.0, 0.0);
        }
        rho
    }

    #[test]
    fn coherence_decay_rates_without_hamiltonian() {
        // Frozen chain: H = 0, local rates (c_ratio = 0), gamma = 0.4.
        let gamma = 0.4;
        let l = 3;
        let h = ChargeSectorHamiltonian::from_matrix(DMatrix::zeros(l, l)).unwrap();
        let rates = rates_for(l, 0.0, gamma);

        // Vacuum coherence of island 1 decays at gamma/2.
        let rho0 = DensityMatrix::from_bloch(l, FRAC_PI_2, 0.0).unwrap();
        let t = 2.5;
        let rho = integrate_raw(&h, &rates, rho0.matrix().clone(), t, 2500);
        let expected = 0.5 * (-0.5 * gamma * t).exp();
        assert_abs_diff_eq!(rho[(1, 0)].re, expected, epsilon = 1e-10);
        assert_abs_diff_eq!(rho[(1, 0)].im, 0.0, epsilon = 1e-12);

        // Intersite coherence decays at D_11 + D_22 = gamma.
        let dim = l + 1;
        let mut start = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
        start[(1, 1)] = C64::new(0.5, 0.0);
        start[(2, 2)] = C64::new(0.5, 0.0);
        start[(1, 2)] = C64::new(0.5, 0.0);
        start[(2, 1)] = C64::new(0.5, 0.0);
        let rho = integrate_raw(&h, &rates, start, t, 2500);
        assert_abs_diff_eq!(rho[(1, 2)].re, 0.5 * (-gamma * t).exp(), epsilon = 1e-10);
        // Populations are untouched by pure dephasing.
        assert_abs_diff_eq!(rho[(1, 1)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(rho[(2, 2)].re, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_noise_matches_unitary_transfer() {
        let l = 5;
        let h = chain(l, 10.0, 0.1);
        let rates = rates_for(l, 0.1, 0.0);
        let rho0 = DensityMatrix::from_bloch(l, FRAC_PI_2, 0.0).unwrap();
        let run = evolve_dephasing(&rho0, &h, &rates, 20.0, 0.001, 100).unwrap();

        let evolution = TransferEvolution::new(&h).unwrap();
        for (k, &t) in run.times.iter().enumerate() {
            let f = evolution.amplitude(t);
            let expected = fidelity_closed_form(f).unwrap();
            assert_abs_diff_eq!(run.fidelity[k], expected, epsilon = 1e-8);
        }
    }

    #[test]
    fn relaxes_to_stationary_state() {
        // gamma large enough that 40 relaxation times fit in a short run.
        let l = 2;
        let gamma = 0.2;
        let h = chain(l, 10.0, 0.1);
        let rates = rates_for(l, 0.1, gamma);
        let rho0 = DensityMatrix::from_bloch(l, FRAC_PI_2, 0.0).unwrap();
        let run = evolve_dephasing(&rho0, &h, &rates, 100.0, 0.01, 100).unwrap();

        let expected = stationary_fidelity::<f64>(l).unwrap();
        let last = *run.fidelity.last().unwrap();
        assert_abs_diff_eq!(last, expected, epsilon = 1e-3);

        let final_state = run.final_state();
        for site in 1..=l {
            assert_abs_diff_eq!(
                final_state.matrix()[(site, site)].re,
                0.5 / l as f64,
                epsilon = 1e-3
            );
        }
        // Vacuum population never moves.
        assert_abs_diff_eq!(final_state.matrix()[(0, 0)].re, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn stationary_fidelity_reference_values() {
        assert_abs_diff_eq!(stationary_fidelity::<f64>(1).unwrap(), 2.0 / 3.0);
        assert_abs_diff_eq!(
            stationary_fidelity::<f64>(7).unwrap(),
            0.52381,
            epsilon = 5e-6
        );
        assert!(stationary_fidelity::<f64>(100000).unwrap() < 0.500002);
        assert!(stationary_fidelity::<f64>(0).is_err());
    }

    #[test]
    fn step_halving_converges_at_fourth_order() {
        let l = 3;
        let h = chain(l, 10.0, 0.1);
        let rates = rates_for(l, 0.1, 0.05);
        let rho0 = DensityMatrix::from_bloch(l, FRAC_PI_2, 0.0).unwrap();
        let t = 5.0;

        let reference = integrate_raw(&h, &rates, rho0.matrix().clone(), t, 4000);
        let error_at = |steps: usize| {
            let rho = integrate_raw(&h, &rates, rho0.matrix().clone(), t, steps);
            (&rho - &reference)
                .iter()
                .map(|z| z.norm())
                .fold(0.0_f64, f64::max)
        };
        let e_coarse = error_at(250);
        let e_medium = error_at(500);
        assert!(e_medium < 1e-5, "medium error {e_medium}");
        assert!(
            e_coarse / e_medium.max(1e-15) > 8.0,
            "errors {e_coarse} vs {e_medium} not shrinking at fourth order"
        );
    }

    #[test]
    fn records_respect_stride() {
        let l = 2;
        let h = chain(l, 10.0, 0.0);
        let rates = rates_for(l, 0.0, 0.1);
        let rho0 = DensityMatrix::from_bloch(l, FRAC_PI_2, 0.0).unwrap();
        let run = evolve_dephasing(&rho0, &h, &rates, 1.0, 0.01, 7).unwrap();
        assert_eq!(run.times[0], 0.0);
        assert_abs_diff_eq!(run.times[1], 0.07, epsilon = 1e-12);
        assert_abs_diff_eq!(*run.times.last().unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(run.len(), run.states.len());
        assert_eq!(run.len(), 16);
    }

    #[test]
    fn rejects_states_without_reconstruction_seeds() {
        let l = 3;
        let h = chain(l, 10.0, 0.1);
        let rates = rates_for(l, 0.1, 0.05);
        // Pure vacuum and pure pair both miss one seed.
        for theta in [0.0, PI] {
            let rho0 = DensityMatrix::from_bloch(l, theta, 0.0).unwrap();
            assert!(matches!(
                evolve_dephasing(&rho0, &h, &rates, 1.0, 0.01, 1),
                Err(Error::InvalidParameter(_))
            ));
        }
    }

    #[test]
    fn oversized_steps_are_rejected_not_absorbed() {
        let l = 3;
        let h = chain(l, 10.0, 0.1);
        let rates = rates_for(l, 0.1, 0.05);
        let rho0 = DensityMatrix::from_bloch(l, FRAC_PI_2, 0.0).unwrap();
        assert!(evolve_dephasing(&rho0, &h, &rates, 5.0, 0.3, 1).is_err());
    }

    #[test]
    fn density_matrix_validation_catches_defects() {
        let dim = 3;
        let mut bad_trace = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
        bad_trace[(0, 0)] = C64::new(1.5, 0.0);
        assert!(DensityMatrix::from_matrix(StateBasis::Chain, bad_trace).is_err());

        let mut non_hermitian = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
        non_hermitian[(0, 0)] = C64::new(1.0, 0.0);
        non_hermitian[(0, 1)] = C64::new(0.3, 0.0);
        assert!(DensityMatrix::from_matrix(StateBasis::Chain, non_hermitian).is_err());

        let mut negative = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
        negative[(0, 0)] = C64::new(1.5, 0.0);
        negative[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(DensityMatrix::from_matrix(StateBasis::Chain, negative).is_err());

        let bloch = DensityMatrix::from_bloch(2, 1.0, 0.5).unwrap();
        assert_eq!(bloch.dim(), 3);
        assert_eq!(bloch.islands(), 2);
        assert!(bloch.validate().is_ok());
        assert!(bloch.min_eigenvalue() > -1e-15);
    }

    /// Mixed-state sphere average, evaluated by brute quadrature from the
    /// channel gains, confirming the closed form used in production.
    fn channel_average_numeric(e_ll: f64, w_l: C64, n_theta: usize, n_phi: usize) -> f64 {
        let h = PI / n_theta as f64;
        let d_phi = 2.0 * PI / n_phi as f64;
        let mut total = 0.0;
        for i in 0..=n_theta {
            let simpson = if i == 0 || i == n_theta {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let theta = h * i as f64;
            let c = (theta / 2.0).cos();
            let s = (theta / 2.0).sin();
            let p = s * s;
            let mut phi_sum = 0.0;
            for j in 0..n_phi {
                let phi = d_phi * (j as f64 + 0.5);
                let fwd = C64::new(phi.cos(), phi.sin());
                let rho01 = w_l.conj() * fwd.conj() * (c * s);
                phi_sum += c * c * (1.0 - p * e_ll)
                    + s * s * p * e_ll
                    + 2.0 * c * s * (rho01 * fwd).re;
            }
            total += simpson * theta.sin() * phi_sum * d_phi;
        }
        total * (h / 3.0) / (4.0 * PI)
    }

    #[test]
    fn channel_closed_form_matches_quadrature() {
        let cases = [
            (1.0, C64::new(1.0, 0.0)),
            (0.5, C64::new(0.2, -0.4)),
            (0.1, C64::new(-0.3, 0.05)),
            (0.0, C64::new(0.0, 0.0)),
        ];
        for &(e, w) in &cases {
            let closed = fidelity_from_channel(e, w);
            let numeric = channel_average_numeric(e, w, 256, 64);
            assert_abs_diff_eq!(closed, numeric, epsilon = 1e-8);
        }
    }

    /// End-to-end check of the master equation against a stochastic
    /// unraveling: pure-state trajectories under white gate noise with
    /// covariance `gamma W^2 / dt`, averaged over an ensemble, must
    /// reproduce the deterministic populations.
    #[test]
    fn stochastic_unraveling_matches_populations() {
        let l = 2;
        let gamma = 0.5;
        let c_ratio = 0.3;
        let u0 = 10.0;
        let t_final = 3.0;

        let params = ChainParams::uniform(l, u0, c_ratio);
        let model = CapacitanceModel::build(l, c_ratio).unwrap();
        let h = build_hamiltonian(&params, &model).unwrap();
        let rates = rates_for(l, c_ratio, gamma);

        // Master equation, pair initially on island 1.
        let dim = l + 1;
        let mut rho0 = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
        rho0[(1, 1)] = C64::new(1.0, 0.0);
        let rho = integrate_raw(&h, &rates, rho0, t_final, 3000);
        let master_p1 = rho[(1, 1)].re;
        let master_p2 = rho[(2, 2)].re;

        // Trajectory ensemble over the two-dimensional charge sector.
        let w = model.inverse();
        let h_m = h.matrix();
        let steps = 6000;
        let dt = t_final / steps as f64;
        let noise_scale = (gamma / dt).sqrt();
        let trajectories = 2000;

        let mut sum_p1 = 0.0;
        let mut sum_p2 = 0.0;
        for traj in 0..trajectories {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(9001, traj));
            let mut psi = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
            for _ in 0..steps {
                let g0: f64 = rng.sample(StandardNormal);
                let g1: f64 = rng.sample(StandardNormal);
                let eta0 = noise_scale * (w[(0, 0)] * g0 + w[(0, 1)] * g1);
                let eta1 = noise_scale * (w[(1, 0)] * g0 + w[(1, 1)] * g1);

                // Exact one-step propagator of the frozen 2x2 Hamiltonian.
                let h11 = h_m[(0, 0)] + eta0;
                let h22 = h_m[(1, 1)] + eta1;
                let h12 = h_m[(0, 1)];
                let mean = 0.5 * (h11 + h22);
                let bz = 0.5 * (h11 - h22);
                let b = (bz * bz + h12 * h12).sqrt();
                let (cos_b, sinc_b) = if b * dt > 1e-12 {
                    ((b * dt).cos(), (b * dt).sin() / b)
                } else {
                    (1.0, dt)
                };
                let phase = C64::new(0.0, -mean * dt).exp();
                let u11 = phase * C64::new(cos_b, -bz * sinc_b);
                let u22 = phase * C64::new(cos_b, bz * sinc_b);
                let u12 = phase * C64::new(0.0, -h12 * sinc_b);
                psi = [u11 * psi[0] + u12 * psi[1], u12 * psi[0] + u22 * psi[1]];
            }
            sum_p1 += psi[0].norm_sqr();
            sum_p2 += psi[1].norm_sqr();
        }
        let traj_p1 = sum_p1 / trajectories as f64;
        let traj_p2 = sum_p2 / trajectories as f64;

        assert!(
            (traj_p1 - master_p1).abs() < 0.02,
            "island 1: trajectories {traj_p1} vs master {master_p1}"
        );
        assert!(
            (traj_p2 - master_p2).abs() < 0.02,
            "island 2: trajectories {traj_p2} vs master {master_p2}"
        );
    }
}
