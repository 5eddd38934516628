// Copyright 2026 jjchain contributors
// SPDX-License-Identifier: Apache-2.0

//! Coherent pair transfer and the Bloch-averaged fidelity.
//!
//! A pair injected on island 1 propagates under the sector Hamiltonian; the
//! transfer amplitude `f(t) = <L| exp(-i H t) |1>` fixes the state delivered
//! at the far end. Averaging the overlap with the intended state over the
//! Bloch sphere of preparations gives the transfer fidelity
//!
//! ```text
//! F(t) = 1/2 + |f|^2 / 6 + Re(f) / 3
//! ```
//!
//! which rewards both charge arrival (`|f|`) and phase alignment (`Re f`).
//! The average lies in `[1/3, 1]`: it exceeds 3/4 only when a sizeable
//! amplitude arrives roughly in phase, and dips below 1/2 whenever the
//! arriving phase points the wrong way. Early-time charging oscillations
//! ride on top of every arrival envelope, so peak extraction works on the
//! envelope of `|f|` and only then maximizes the fidelity inside a lobe.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::float::{real, real_of, Float};
use crate::hamiltonian::ChargeSectorHamiltonian;

/// Spectral form of a sector Hamiltonian, cached for repeated evaluation of
/// `exp(-i H t)` matrix elements at arbitrary times.
#[derive(Debug, Clone)]
pub struct TransferEvolution<T: Float> {
    eigenvalues: DVector<T>,
    eigenvectors: DMatrix<T>,
    /// `V[L-1][k] * V[0][k]`, the spectral weight of the end-to-end element.
    weights: Vec<T>,
    length: usize,
}

impl<T: Float> TransferEvolution<T> {
    pub fn new(hamiltonian: &ChargeSectorHamiltonian<T>) -> Result<Self> {
        let matrix = hamiltonian.matrix();
        let length = matrix.nrows();
        let eigen = SymmetricEigen::try_new(matrix.clone(), T::epsilon(), 0).ok_or_else(|| {
            Error::NumericalFailure("eigendecomposition did not converge".into())
        })?;

        let q = &eigen.eigenvectors;
        let gram = q.transpose() * q;
        let mut residual = T::zero();
        for i in 0..length {
            for j in 0..length {
                let target = if i == j { T::one() } else { T::zero() };
                residual = residual.max((gram[(i, j)] - target).abs());
            }
        }
        let tol = T::epsilon() * real_of::<T>(100 * length.max(1));
        if residual > tol {
            return Err(Error::NumericalFailure(format!(
                "eigenbasis lost orthonormality, residual {residual}"
            )));
        }

        let weights = (0..length)
            .map(|k| q[(length - 1, k)] * q[(0, k)])
            .collect();
        Ok(Self {
            eigenvalues: eigen.eigenvalues,
            eigenvectors: eigen.eigenvectors,
            weights,
            length,
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    /// Eigenvalues of the charge-sector Hamiltonian, in ascending order.
    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors, one per column, matching `eigenvalues`.
    pub fn eigenvectors(&self) -> &DMatrix<T> {
        &self.eigenvectors
    }

    /// End-to-end amplitude `<L| exp(-i H t) |1>`.
    pub fn amplitude(&self, t: T) -> Complex<T> {
        let mut f = Complex::new(T::zero(), T::zero());
        for k in 0..self.length {
            let phase = self.eigenvalues[k] * t;
            f += Complex::new(phase.cos(), -phase.sin()) * self.weights[k];
        }
        f
    }

    /// Full evolved column `<j| exp(-i H t) |1>` for all islands `j`.
    pub fn site_amplitudes(&self, t: T) -> Vec<Complex<T>> {
        let zero = Complex::new(T::zero(), T::zero());
        let mut out = vec![zero; self.length];
        for k in 0..self.length {
            let phase = self.eigenvalues[k] * t;
            let e = Complex::new(phase.cos(), -phase.sin());
            let c0 = self.eigenvectors[(0, k)];
            for (j, slot) in out.iter_mut().enumerate() {
                *slot += e * (self.eigenvectors[(j, k)] * c0);
            }
        }
        out
    }
}

/// One-shot end-to-end amplitude at time `t`.
pub fn transfer_amplitude<T: Float>(
    hamiltonian: &ChargeSectorHamiltonian<T>,
    t: T,
) -> Result<Complex<T>> {
    if !t.is_finite() || t < T::zero() {
        return Err(Error::InvalidParameter(format!(
            "time must be finite and non-negative, got {t}"
        )));
    }
    Ok(TransferEvolution::new(hamiltonian)?.amplitude(t))
}

fn validate_amplitude<T: Float>(f: Complex<T>) -> Result<T> {
    let norm_sqr = f.norm_sqr();
    if !norm_sqr.is_finite() {
        return Err(Error::InvalidParameter(
            "transfer amplitude must be finite".into(),
        ));
    }
    let modulus = norm_sqr.sqrt();
    let tol = real::<T>(1e-8).max(T::epsilon() * real::<T>(100.0));
    if modulus > T::one() + tol {
        return Err(Error::InvalidParameter(format!(
            "amplitude modulus {modulus} exceeds unity"
        )));
    }
    Ok(modulus)
}

fn closed_form_raw<T: Float>(f: Complex<T>) -> T {
    real::<T>(0.5) + f.norm_sqr() / real::<T>(6.0) + f.re / real::<T>(3.0)
}

/// Bloch-sphere averaged fidelity for transfer amplitude `f`.
///
/// Errors if `|f|` exceeds unity beyond roundoff. The result lies in
/// `[1/3, 1]`; the lower extreme is reached at `f = -1`, a perfectly
/// arriving pair carrying the opposite of the intended phase.
pub fn fidelity_closed_form<T: Float>(f: Complex<T>) -> Result<T> {
    validate_amplitude(f)?;
    Ok(closed_form_raw(f))
}

/// Direct quadrature of the fidelity average over the Bloch sphere.
///
/// For each preparation `cos(t/2)|vac> + e^{i phi} sin(t/2)|1>` the reduced
/// state of the receiving island is assembled explicitly and its overlap
/// with the intended state integrated with weight `sin(theta)/(4 pi)`,
/// Simpson in `theta` and midpoint in `phi`. This is the slow reference
/// the closed form is checked against; both angles need at least 32 points.
pub fn fidelity_bloch_numeric<T: Float>(
    f: Complex<T>,
    n_theta: usize,
    n_phi: usize,
) -> Result<T> {
    if n_theta < 32 || n_phi < 32 {
        return Err(Error::InvalidParameter(format!(
            "quadrature needs at least 32 points per angle, got {n_theta} x {n_phi}"
        )));
    }
    validate_amplitude(f)?;

    let n_t = n_theta + (n_theta & 1);
    let h = T::pi() / real_of::<T>(n_t);
    let d_phi = T::two_pi() / real_of::<T>(n_phi);
    let half = real::<T>(0.5);
    let norm_sqr = f.norm_sqr();

    let mut total = T::zero();
    for i in 0..=n_t {
        let simpson = if i == 0 || i == n_t {
            T::one()
        } else if i % 2 == 1 {
            real::<T>(4.0)
        } else {
            real::<T>(2.0)
        };
        let theta = h * real_of::<T>(i);
        let cos_half = (theta * half).cos();
        let sin_half = (theta * half).sin();
        let occupancy = sin_half * sin_half;

        let rho_00 = T::one() - occupancy * norm_sqr;
        let rho_11 = occupancy * norm_sqr;
        let coherence = f.conj() * (cos_half * sin_half);

        let mut phi_sum = T::zero();
        for j in 0..n_phi {
            let phi = d_phi * (real_of::<T>(j) + half);
            let forward = Complex::new(phi.cos(), phi.sin());
            let rho_01 = coherence * forward.conj();
            let overlap = cos_half * cos_half * rho_00
                + sin_half * sin_half * rho_11
                + real::<T>(2.0) * cos_half * sin_half * (rho_01 * forward).re;
            phi_sum += overlap;
        }

        total += simpson * theta.sin() * phi_sum * d_phi;
    }

    let quarter_pi_inv = real::<T>(0.25) / T::pi();
    Ok(total * (h / real::<T>(3.0)) * quarter_pi_inv)
}

/// Transfer amplitude and fidelity sampled on a uniform time grid.
#[derive(Debug, Clone)]
pub struct FidelitySeries<T: Float> {
    /// Sample times, uniform from zero.
    pub times: Vec<T>,
    /// End-to-end amplitude at each sample.
    pub amplitude: Vec<Complex<T>>,
    /// Bloch-averaged fidelity at each sample.
    pub fidelity: Vec<T>,
}

impl<T: Float> FidelitySeries<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn check_shape(&self) -> Result<()> {
        if self.times.len() != self.amplitude.len() || self.times.len() != self.fidelity.len() {
            return Err(Error::InvalidParameter(
                "series columns have mismatched lengths".into(),
            ));
        }
        if self.times.len() < 3 {
            return Err(Error::NoInteriorMaximum(
                "series has fewer than three samples".into(),
            ));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "series times must increase strictly".into(),
            ));
        }
        Ok(())
    }
}

/// Samples amplitude and fidelity on the grid `0, dt, 2 dt, ..., <= t_max`.
///
/// The step must resolve the fastest charging oscillation, so `dt <= 0.1`
/// is enforced. Every sample is checked against the unitarity bound and the
/// mathematical range of the fidelity average.
pub fn fidelity_series<T: Float>(
    hamiltonian: &ChargeSectorHamiltonian<T>,
    t_max: T,
    dt: T,
) -> Result<FidelitySeries<T>> {
    if !dt.is_finite() || dt <= T::zero() || dt > real::<T>(0.1) {
        return Err(Error::InvalidParameter(format!(
            "dt must lie in (0, 0.1], got {dt}"
        )));
    }
    if !t_max.is_finite() || t_max < dt {
        return Err(Error::InvalidParameter(format!(
            "t_max must be finite and at least dt, got {t_max}"
        )));
    }

    let evolution = TransferEvolution::new(hamiltonian)?;
    let steps = (t_max.to_f64().expect("finite time") / dt.to_f64().expect("finite step")
        + 1e-9)
        .floor() as usize;

    let bound_tol = real::<T>(1e-10).max(T::epsilon() * real::<T>(100.0));
    let lower = T::one() / real::<T>(3.0) - bound_tol;
    let upper = T::one() + bound_tol;

    let mut times = Vec::with_capacity(steps + 1);
    let mut amplitude = Vec::with_capacity(steps + 1);
    let mut fidelity = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = real_of::<T>(k) * dt;
        let f = evolution.amplitude(t);
        let modulus = f.norm_sqr().sqrt();
        if !modulus.is_finite() || modulus > upper {
            return Err(Error::NumericalFailure(format!(
                "amplitude modulus {modulus} breaks unitarity at t = {t}"
            )));
        }
        let fid = closed_form_raw(f);
        if fid < lower || fid > upper {
            return Err(Error::NumericalFailure(format!(
                "fidelity {fid} outside [1/3, 1] at t = {t}"
            )));
        }
        times.push(t);
        amplitude.push(f);
        fidelity.push(fid);
    }

    Ok(FidelitySeries {
        times,
        amplitude,
        fidelity,
    })
}

/// How a reported peak was selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakKind {
    FirstMaximum,
    FirstAboveThreshold,
}

/// A refined fidelity peak.
#[derive(Debug, Clone, Copy)]
pub struct PeakResult<T: Float> {
    /// Peak time, refined beyond the sampling grid.
    pub t_peak: T,
    /// Fidelity at the refined peak.
    pub f_peak: T,
    pub kind: PeakKind,
    /// The threshold used for selection, if any.
    pub threshold: Option<T>,
}

/// Indices of strict local maxima; plateaus count once, at their left edge.
fn local_maxima<T: Float>(values: &[T]) -> Vec<usize> {
    let n = values.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] {
                peaks.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Expands an amplitude-modulus peak to its lobe, walking both flanks down
/// to the neighbouring minima.
fn lobe_bounds<T: Float>(values: &[T], peak: usize) -> (usize, usize) {
    let mut lo = peak;
    while lo > 0 && values[lo - 1] <= values[lo] {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < values.len() && values[hi + 1] <= values[hi] {
        hi += 1;
    }
    (lo, hi)
}

/// Best fidelity sample inside a lobe, if it is a strict interior maximum
/// of the whole series.
fn lobe_candidate<T: Float>(fidelity: &[T], lo: usize, hi: usize) -> Option<usize> {
    let mut best = lo;
    for k in lo..=hi {
        if fidelity[k] > fidelity[best] {
            best = k;
        }
    }
    if best == 0 || best + 1 >= fidelity.len() || !(fidelity[best] > fidelity[best - 1]) {
        return None;
    }
    let mut j = best;
    while j + 1 < fidelity.len() && fidelity[j + 1] == fidelity[best] {
        j += 1;
    }
    if j + 1 >= fidelity.len() || fidelity[j + 1] >= fidelity[best] {
        return None;
    }
    Some(best)
}

/// Grid-level peak extraction for externally recorded traces.
///
/// Walks the lobes of `envelope` (for transfer problems, a modulus such as
/// `|f|` whose arrival humps are free of charging oscillations), keeps the
/// lobes whose top reaches `relative_floor` times the global envelope
/// maximum, and returns the index of the best `objective` sample inside
/// each kept lobe, in time order. Lobes whose best sample is not a strict
/// interior maximum of the whole series are dropped, so an empty result
/// means the window resolved no peaks.
pub fn lobe_peak_indices<T: Float>(
    envelope: &[T],
    objective: &[T],
    relative_floor: T,
) -> Result<Vec<usize>> {
    if envelope.len() != objective.len() {
        return Err(Error::DimensionMismatch {
            what: "peak extraction columns",
            expected: envelope.len(),
            got: objective.len(),
        });
    }
    if envelope.len() < 3 {
        return Err(Error::NoInteriorMaximum(
            "peak extraction needs at least three samples".into(),
        ));
    }
    if !relative_floor.is_finite() || relative_floor < T::zero() || relative_floor >= T::one() {
        return Err(Error::InvalidParameter(format!(
            "relative floor must lie in [0, 1), got {relative_floor}"
        )));
    }

    let peaks = local_maxima(envelope);
    let top = peaks
        .iter()
        .map(|&p| envelope[p])
        .fold(T::zero(), |a, b| a.max(b));
    let floor = top * relative_floor;

    let mut indices = Vec::new();
    for &p in &peaks {
        if envelope[p] < floor {
            continue;
        }
        let (lo, hi) = lobe_bounds(envelope, p);
        if let Some(best) = lobe_candidate(objective, lo, hi) {
            indices.push(best);
        }
    }
    indices.sort_unstable();
    indices.dedup();
    Ok(indices)
}

/// Golden-section maximization of the exact fidelity over a grid bracket.
fn refine_peak<T: Float>(evolution: &TransferEvolution<T>, lo: T, hi: T) -> (T, T) {
    let ratio = real::<T>(0.618_033_988_749_894_8);
    let tol = real::<T>(1e-6).max(T::epsilon() * hi.abs() * real::<T>(8.0));
    let eval = |t: T| closed_form_raw(evolution.amplitude(t));

    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - (b - a) * ratio;
    let mut x2 = a + (b - a) * ratio;
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    let mut iterations = 0;
    while b - a > tol && iterations < 200 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + (b - a) * ratio;
            f2 = eval(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - (b - a) * ratio;
            f1 = eval(x1);
        }
        iterations += 1;
    }
    let t = (a + b) * real::<T>(0.5);
    (t, eval(t))
}

struct LobeWalk<'a, T: Float> {
    series: &'a FidelitySeries<T>,
    evolution: TransferEvolution<T>,
    lobes: Vec<(usize, usize)>,
    checked: bool,
}

impl<'a, T: Float> LobeWalk<'a, T> {
    fn new(
        series: &'a FidelitySeries<T>,
        hamiltonian: &ChargeSectorHamiltonian<T>,
    ) -> Result<Self> {
        series.check_shape()?;
        let evolution = TransferEvolution::new(hamiltonian)?;
        let modulus: Vec<T> = series
            .amplitude
            .iter()
            .map(|f| f.norm_sqr().sqrt())
            .collect();
        let peaks = local_maxima(&modulus);
        let lobes = if peaks.is_empty() {
            vec![(0, modulus.len() - 1)]
        } else {
            peaks.iter().map(|&p| lobe_bounds(&modulus, p)).collect()
        };
        Ok(Self {
            series,
            evolution,
            lobes,
            checked: false,
        })
    }

    /// Confirms the series belongs to the Hamiltonian by re-evaluating one
    /// sample. Cheap, and catches mixed-up arguments before they turn into
    /// a silently wrong refined peak.
    fn check_consistency(&mut self, index: usize) -> Result<()> {
        if self.checked {
            return Ok(());
        }
        let expected = closed_form_raw(self.evolution.amplitude(self.series.times[index]));
        let tol = real::<T>(1e-9).max(T::epsilon() * real::<T>(1000.0));
        if (expected - self.series.fidelity[index]).abs() > tol {
            return Err(Error::InvalidParameter(
                "fidelity series does not match the Hamiltonian".into(),
            ));
        }
        self.checked = true;
        Ok(())
    }

    fn refine(&self, index: usize) -> (T, T) {
        refine_peak(
            &self.evolution,
            self.series.times[index - 1],
            self.series.times[index + 1],
        )
    }
}

/// Locates the first arrival peak of the fidelity.
///
/// Charging oscillations decorate every arrival envelope with shallow
/// ripples, so the search walks the lobes of `|f|` in time order, takes the
/// best fidelity sample inside each lobe, and keeps the first one that is a
/// strict interior maximum and rises at least halfway from 1/2 to the best
/// fidelity in the series. The winner is refined to `1e-6` in time by
/// golden-section on the exact amplitude.
pub fn find_first_maximum<T: Float>(
    series: &FidelitySeries<T>,
    hamiltonian: &ChargeSectorHamiltonian<T>,
) -> Result<PeakResult<T>> {
    let mut walk = LobeWalk::new(series, hamiltonian)?;
    let half = real::<T>(0.5);
    let best = series
        .fidelity
        .iter()
        .fold(T::zero(), |a, &x| a.max(x));
    let gate = half + (best - half).max(T::zero()) * half;

    for lobe in 0..walk.lobes.len() {
        let (lo, hi) = walk.lobes[lobe];
        let Some(index) = lobe_candidate(&series.fidelity, lo, hi) else {
            continue;
        };
        if series.fidelity[index] < gate {
            continue;
        }
        walk.check_consistency(index)?;
        let (t_peak, f_peak) = walk.refine(index);
        return Ok(PeakResult {
            t_peak,
            f_peak,
            kind: PeakKind::FirstMaximum,
            threshold: None,
        });
    }
    Err(Error::NoInteriorMaximum(
        "no peak rises above the baseline; enlarge the time window".into(),
    ))
}

/// Walks arrival lobes in time order and returns the first whose refined
/// peak fidelity reaches `threshold`. The threshold must lie in (0.5, 1).
pub fn find_first_above_threshold<T: Float>(
    series: &FidelitySeries<T>,
    hamiltonian: &ChargeSectorHamiltonian<T>,
    threshold: T,
) -> Result<PeakResult<T>> {
    if !threshold.is_finite() || threshold <= real::<T>(0.5) || threshold >= T::one() {
        return Err(Error::InvalidParameter(format!(
            "threshold must lie strictly between 0.5 and 1, got {threshold}"
        )));
    }
    let mut walk = LobeWalk::new(series, hamiltonian)?;
    for lobe in 0..walk.lobes.len() {
        let (lo, hi) = walk.lobes[lobe];
        let Some(index) = lobe_candidate(&series.fidelity, lo, hi) else {
            continue;
        };
        walk.check_consistency(index)?;
        let (t_peak, f_peak) = walk.refine(index);
        if f_peak >= threshold {
            return Ok(PeakResult {
                t_peak,
                f_peak,
                kind: PeakKind::FirstAboveThreshold,
                threshold: Some(threshold),
            });
        }
    }
    Err(Error::NoInteriorMaximum(
        "no fidelity peak reaches the threshold within the window".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::electrostatics::CapacitanceModel;
    use crate::hamiltonian::{build_hamiltonian, sample_disorder, ChainParams, DisorderSpec};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn clean_chain(length: usize, u0: f64, c_ratio: f64) -> ChargeSectorHamiltonian<f64> {
        let params = ChainParams::uniform(length, u0, c_ratio);
        let model = CapacitanceModel::build(length, c_ratio).unwrap();
        build_hamiltonian(&params, &model).unwrap()
    }

    /// Two islands, zero ground coupling: the sector matrix is
    /// `5 I - sigma_x / 2` for u0 = 10, so the amplitude has the closed
    /// form `i sin(t/2) exp(-i 5 t)`.
    fn two_site_amplitude(u0: f64, t: f64) -> Complex64 {
        Complex64::new(0.0, (0.5 * t).sin()) * Complex64::new(0.0, -0.5 * u0 * t).exp()
    }

    #[test]
    fn matches_direct_two_site_exponential() {
        let h = clean_chain(2, 10.0, 0.0);
        let evolution = TransferEvolution::new(&h).unwrap();
        for &t in &[0.0, 0.3, 1.7, PI, 2.2, 10.0] {
            let expected = two_site_amplitude(10.0, t);
            let got = evolution.amplitude(t);
            assert_abs_diff_eq!(got.re, expected.re, epsilon = 1e-12);
            assert_abs_diff_eq!(got.im, expected.im, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(evolution.amplitude(PI).norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn amplitude_at_zero_time() {
        let h = clean_chain(6, 10.0, 0.1);
        assert!(transfer_amplitude(&h, 0.0).unwrap().norm_sqr() < 1e-28);
        let single = clean_chain(1, 10.0, 0.1);
        let f = transfer_amplitude(&single, 0.0).unwrap();
        assert_abs_diff_eq!(f.re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_negative_time() {
        let h = clean_chain(3, 10.0, 0.1);
        assert!(matches!(
            transfer_amplitude(&h, -0.1),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn evolved_column_stays_normalized() {
        let spec = DisorderSpec {
            bond_sigma: 0.15,
            charge_sigma: 0.05,
            seed: 41,
        };
        let base = ChainParams::uniform(9, 10.0, 0.1);
        let params = sample_disorder(&spec, &base, 3).unwrap();
        let model = CapacitanceModel::build(9, 0.1).unwrap();
        let h = build_hamiltonian(&params, &model).unwrap();
        let evolution = TransferEvolution::new(&h).unwrap();
        for &t in &[0.0, 0.7, 13.3, 49.9] {
            let total: f64 = evolution
                .site_amplitudes(t)
                .iter()
                .map(|a| a.norm_sqr())
                .sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        }
    }

    /// Fixed-step RK4 on the Schroedinger equation, kept deliberately
    /// independent of the spectral route.
    fn rk4_schrodinger(
        h: &DMatrix<f64>,
        mut psi: DVector<Complex64>,
        t: f64,
        steps: usize,
    ) -> DVector<Complex64> {
        let hc = h.map(|x| Complex64::new(x, 0.0));
        let dt = Complex64::new(t / steps as f64, 0.0);
        let minus_i = Complex64::new(0.0, -1.0);
        let half = Complex64::new(0.5, 0.0);
        let sixth = Complex64::new(1.0 / 6.0, 0.0);
        let two = Complex64::new(2.0, 0.0);
        for _ in 0..steps {
            let k1 = (&hc * &psi) * minus_i;
            let k2 = (&hc * &(&psi + &k1 * (dt * half))) * minus_i;
            let k3 = (&hc * &(&psi + &k2 * (dt * half))) * minus_i;
            let k4 = (&hc * &(&psi + &k3 * dt)) * minus_i;
            psi += (k1 + k2 * two + k3 * two + k4) * (dt * sixth);
        }
        psi
    }

    #[test]
    fn matches_independent_time_stepper() {
        let h = clean_chain(7, 10.0, 0.1);
        let evolution = TransferEvolution::new(&h).unwrap();
        let mut psi = DVector::from_element(7, Complex64::new(0.0, 0.0));
        psi[0] = Complex64::new(1.0, 0.0);

        let mut elapsed = 0.0_f64;
        for &t in &[10.0, 25.0, 50.0] {
            let span = t - elapsed;
            let steps = (span / 1e-3).round() as usize;
            psi = rk4_schrodinger(h.matrix(), psi, span, steps);
            elapsed = t;
            let direct = psi[6];
            let spectral = evolution.amplitude(t);
            assert_abs_diff_eq!(spectral.re, direct.re, epsilon = 1e-8);
            assert_abs_diff_eq!(spectral.im, direct.im, epsilon = 1e-8);
        }
    }

    #[test]
    fn closed_form_reference_points() {
        let f = |re, im| Complex64::new(re, im);
        assert_abs_diff_eq!(fidelity_closed_form(f(0.0, 0.0)).unwrap(), 0.5);
        assert_abs_diff_eq!(fidelity_closed_form(f(1.0, 0.0)).unwrap(), 1.0);
        assert_abs_diff_eq!(
            fidelity_closed_form(f(0.0, 1.0)).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            fidelity_closed_form(f(-1.0, 0.0)).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            fidelity_closed_form(f(0.6, 0.8)).unwrap(),
            13.0 / 15.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            fidelity_closed_form(f(1.1, 0.0)),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            fidelity_closed_form(f(f64::NAN, 0.0)),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for &(re, im) in &[
            (0.3, 0.4),
            (-0.55, 0.2),
            (0.0, 0.999),
            (0.05, 0.0),
            (-0.999, 0.0),
        ] {
            let f = Complex64::new(re, im);
            let closed = fidelity_closed_form(f).unwrap();
            let numeric = fidelity_bloch_numeric(f, 256, 256).unwrap();
            assert_abs_diff_eq!(numeric, closed, epsilon = 1e-8);
        }
    }

    #[test]
    fn quadrature_converges_with_resolution() {
        let f = Complex64::new(0.3, 0.4);
        let closed = fidelity_closed_form(f).unwrap();
        let err = |n: usize| (fidelity_bloch_numeric(f, n, 64).unwrap() - closed).abs();
        let (e32, e64, e128, e256) = (err(32), err(64), err(128), err(256));
        assert!(e32 / e64.max(1e-16) > 3.5, "e32 {e32}, e64 {e64}");
        assert!(e64 / e128.max(1e-16) > 3.5, "e64 {e64}, e128 {e128}");
        assert!(e256 < 1e-6, "e256 {e256}");
    }

    #[test]
    fn quadrature_rejects_coarse_grids() {
        let f = Complex64::new(0.1, 0.0);
        assert!(fidelity_bloch_numeric(f, 16, 64).is_err());
        assert!(fidelity_bloch_numeric(f, 64, 16).is_err());
    }

    #[test]
    fn series_respects_bounds_and_matches_closed_form() {
        let h = clean_chain(7, 10.0, 0.0);
        let series = fidelity_series(&h, 30.0, 0.01).unwrap();
        assert_eq!(series.len(), 3001);
        assert!(series.times.windows(2).all(|w| w[1] > w[0]));
        for k in 0..series.len() {
            assert!(series.amplitude[k].norm_sqr().sqrt() <= 1.0 + 1e-10);
            assert!(series.fidelity[k] >= 1.0 / 3.0 - 1e-10);
            assert!(series.fidelity[k] <= 1.0 + 1e-10);
            assert_abs_diff_eq!(
                series.fidelity[k],
                fidelity_closed_form(series.amplitude[k]).unwrap(),
                epsilon = 1e-14
            );
        }
    }

    /// Three islands without charging energy: the amplitude is the real
    /// function `-(1 - cos(t / sqrt 2)) / 2`, so the fidelity never exceeds
    /// 1/2 and touches 1/3 exactly when the pair arrives in antiphase.
    #[test]
    fn flat_band_three_site_fidelity_floor() {
        let h = clean_chain(3, 0.0, 0.0);
        let series = fidelity_series(&h, 30.0, 0.01).unwrap();
        for k in 0..series.len() {
            let t = series.times[k];
            let expected = -(1.0 - (t / 2.0_f64.sqrt()).cos()) / 2.0;
            assert_abs_diff_eq!(series.amplitude[k].re, expected, epsilon = 1e-12);
            assert_abs_diff_eq!(series.amplitude[k].im, 0.0, epsilon = 1e-12);
            assert!(series.fidelity[k] <= 0.5 + 1e-12);
        }
        let floor = series.fidelity.iter().cloned().fold(1.0, f64::min);
        assert_abs_diff_eq!(floor, 1.0 / 3.0, epsilon = 1e-6);
        assert!(matches!(
            find_first_maximum(&series, &h),
            Err(Error::NoInteriorMaximum(_))
        ));
    }

    #[test]
    fn series_single_island_is_static_without_charging() {
        let h = clean_chain(1, 0.0, 0.0);
        let series = fidelity_series(&h, 10.0, 0.1).unwrap();
        for &f in &series.fidelity {
            assert_abs_diff_eq!(f, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn series_two_site_flat_band() {
        let h = clean_chain(2, 0.0, 0.0);
        let series = fidelity_series(&h, 20.0, 0.01).unwrap();
        for k in 0..series.len() {
            let t = series.times[k];
            let expected =
                fidelity_closed_form(Complex64::new(0.0, (0.5 * t).sin())).unwrap();
            assert_abs_diff_eq!(series.fidelity[k], expected, epsilon = 1e-12);
        }
        let at_pi = fidelity_closed_form(transfer_amplitude(&h, PI).unwrap()).unwrap();
        assert_abs_diff_eq!(at_pi, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn series_rejects_bad_grid() {
        let h = clean_chain(2, 0.0, 0.0);
        assert!(fidelity_series(&h, 20.0, 0.0).is_err());
        assert!(fidelity_series(&h, 20.0, 0.2).is_err());
        assert!(fidelity_series(&h, 0.001, 0.01).is_err());
        assert!(fidelity_series(&h, f64::INFINITY, 0.01).is_err());
    }

    #[test]
    fn first_maximum_two_site_flat_band() {
        let h = clean_chain(2, 0.0, 0.0);
        let series = fidelity_series(&h, 20.0, 0.01).unwrap();
        let peak = find_first_maximum(&series, &h).unwrap();
        assert_eq!(peak.kind, PeakKind::FirstMaximum);
        assert!(peak.threshold.is_none());
        assert_abs_diff_eq!(peak.t_peak, PI, epsilon = 2e-6);
        assert_abs_diff_eq!(peak.f_peak, 2.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn first_maximum_skips_charging_ripples() {
        let h = clean_chain(7, 10.0, 0.0);
        let series = fidelity_series(&h, 30.0, 0.01).unwrap();
        let peak = find_first_maximum(&series, &h).unwrap();
        assert!(
            peak.f_peak >= 0.75,
            "first arrival peak {} below 0.75",
            peak.f_peak
        );
        assert!(
            peak.t_peak > 3.0 && peak.t_peak < 15.0,
            "arrival time {} outside the ballistic window",
            peak.t_peak
        );
    }

    #[test]
    fn first_maximum_needs_a_window_containing_the_arrival() {
        let h = clean_chain(7, 10.0, 0.0);
        let series = fidelity_series(&h, 0.5, 0.01).unwrap();
        assert!(matches!(
            find_first_maximum(&series, &h),
            Err(Error::NoInteriorMaximum(_))
        ));
    }

    #[test]
    fn first_maximum_detects_foreign_series() {
        let h = clean_chain(7, 10.0, 0.0);
        let series = fidelity_series(&h, 30.0, 0.01).unwrap();
        let other = clean_chain(7, 9.7, 0.0);
        assert!(matches!(
            find_first_maximum(&series, &other),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn threshold_selects_the_first_qualifying_lobe() {
        let h = clean_chain(2, 10.0, 0.0);
        let series = fidelity_series(&h, 20.0, 0.01).unwrap();
        let first = find_first_maximum(&series, &h).unwrap();
        assert!(first.f_peak > 0.99 && first.f_peak < 0.9925);
        assert!(first.t_peak > 2.7 && first.t_peak < 2.95);

        let above = find_first_above_threshold(&series, &h, 0.9).unwrap();
        assert_eq!(above.kind, PeakKind::FirstAboveThreshold);
        assert_eq!(above.threshold, Some(0.9));
        assert_abs_diff_eq!(above.t_peak, first.t_peak, epsilon = 1e-6);

        let low = find_first_above_threshold(&series, &h, 0.6).unwrap();
        assert_abs_diff_eq!(low.t_peak, first.t_peak, epsilon = 1e-6);

        assert!(matches!(
            find_first_above_threshold(&series, &h, 0.995),
            Err(Error::NoInteriorMaximum(_))
        ));
    }

    #[test]
    fn threshold_validates_its_range() {
        let h = clean_chain(2, 10.0, 0.0);
        let series = fidelity_series(&h, 20.0, 0.01).unwrap();
        for bad in [0.5, 1.0, 0.3, 1.2, f64::NAN] {
            assert!(matches!(
                find_first_above_threshold(&series, &h, bad),
                Err(Error::InvalidParameter(_))
            ));
        }
    }

    #[test]
    fn threshold_exhausts_lobes_below_baseline() {
        let h = clean_chain(3, 0.0, 0.0);
        let series = fidelity_series(&h, 40.0, 0.01).unwrap();
        assert!(matches!(
            find_first_above_threshold(&series, &h, 0.51),
            Err(Error::NoInteriorMaximum(_))
        ));
    }

    #[test]
    fn single_island_charging_peak() {
        // One island with charging energy: |f| = 1 throughout and the
        // fidelity oscillates as the pair phase beats against the vacuum.
        let h = clean_chain(1, 10.0, 0.1);
        let energy = h.matrix()[(0, 0)];
        let series = fidelity_series(&h, 10.0, 0.01).unwrap();
        let peak = find_first_maximum(&series, &h).unwrap();
        assert_abs_diff_eq!(peak.t_peak, 2.0 * PI / energy, epsilon = 1e-5);
        assert_abs_diff_eq!(peak.f_peak, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn grid_peak_indices_follow_the_envelope_lobes() {
        let envelope = [0.0, 0.5, 1.0, 0.5, 0.1, 0.3, 0.6, 0.3, 0.0];
        let objective = [0.5, 0.6, 0.9, 0.7, 0.5, 0.5, 0.8, 0.6, 0.5];
        assert_eq!(
            lobe_peak_indices(&envelope, &objective, 0.25).unwrap(),
            vec![2, 6]
        );
        // A higher floor drops the weaker lobe.
        assert_eq!(
            lobe_peak_indices(&envelope, &objective, 0.7).unwrap(),
            vec![2]
        );
        // Monotone envelopes resolve no peaks.
        let ramp = [0.0, 0.2, 0.4, 0.6, 0.8];
        assert!(lobe_peak_indices(&ramp, &ramp, 0.25).unwrap().is_empty());

        assert!(lobe_peak_indices(&envelope, &objective[..5], 0.25).is_err());
        assert!(lobe_peak_indices(&envelope, &objective, 1.0).is_err());
        assert!(lobe_peak_indices(&envelope, &objective, -0.1).is_err());
    }

    #[test]
    fn grid_peak_indices_agree_with_the_refined_search() {
        let h = clean_chain(7, 10.0, 0.1);
        let series = fidelity_series(&h, 30.0, 0.01).unwrap();
        let envelope: Vec<f64> = series
            .amplitude
            .iter()
            .map(|f| f.norm_sqr().sqrt())
            .collect();
        let indices = lobe_peak_indices(&envelope, &series.fidelity, 0.25).unwrap();
        assert!(!indices.is_empty());

        let refined = find_first_maximum(&series, &h).unwrap();
        let nearest = indices
            .iter()
            .map(|&i| series.times[i])
            .min_by(|a, b| {
                (a - refined.t_peak)
                    .abs()
                    .partial_cmp(&(b - refined.t_peak).abs())
                    .unwrap()
            })
            .unwrap();
        assert!((nearest - refined.t_peak).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn closed_form_agrees_with_quadrature(re in -0.999f64..0.999, im in -0.999f64..0.999) {
            prop_assume!(re * re + im * im <= 0.998);
            let f = Complex64::new(re, im);
            let closed = fidelity_closed_form(f).unwrap();
            let numeric = fidelity_bloch_numeric(f, 64, 64).unwrap();
            prop_assert!((closed - numeric).abs() < 1e-6);
        }

        #[test]
        fn random_chains_stay_unitary(
            length in 1usize..8,
            u0 in 0.0f64..12.0,
            c_ratio in 0.0f64..1.0,
            seed in 0u64..1000,
            t in 0.0f64..20.0,
        ) {
            let spec = DisorderSpec { bond_sigma: 0.2, charge_sigma: 0.1, seed };
            let base = ChainParams::uniform(length, u0, c_ratio);
            let params = sample_disorder(&spec, &base, 0).unwrap();
            let model = CapacitanceModel::build(length, c_ratio).unwrap();
            let h = build_hamiltonian(&params, &model).unwrap();
            let evolution = TransferEvolution::new(&h).unwrap();

            let total: f64 = evolution.site_amplitudes(t).iter().map(|a| a.norm_sqr()).sum();
            prop_assert!((total - 1.0).abs() < 1e-10);

            let f = evolution.amplitude(t);
            prop_assert!(f.norm_sqr().sqrt() <= 1.0 + 1e-12);
            let fid = fidelity_closed_form(f).unwrap();
            prop_assert!(fid >= 1.0 / 3.0 - 1e-12 && fid <= 1.0 + 1e-12);
        }
    }
}
