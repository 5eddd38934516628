// Copyright 2026 jjchain contributors
// SPDX-License-Identifier: Apache-2.0

//! Charge-sector Hamiltonian of the chain.
//!
//! With the islands restricted to two charge states each and the total
//! charge fixed, the dynamics lives on the vacuum plus the `L` basis states
//! `|j>` ("one extra pair on island `j`"). In units of the nominal Josephson
//! energy the sector Hamiltonian is tridiagonal:
//!
//! ```text
//! H[j][j]   = (u0/2) * ( W[j][j] - 2 * sum_i W[i][j] * qx[i] )
//! H[j][j+1] = -bond[j] / 2
//! ```
//!
//! where `W` is the inverse capacitance matrix, `qx[i]` the island gate
//! charges in pair units, `bond[j]` the Josephson energy of junction `j`
//! relative to nominal, and `u0` the charging-to-Josephson energy ratio.
//! The vacuum is decoupled and its energy is fixed to exactly zero, which
//! makes all transfer phases relative to the vacuum physical.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::electrostatics::CapacitanceModel;
use crate::error::{Error, Result};
use crate::float::{real, Float};

/// Physical parameters of one chain realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainParams<T: Float> {
    /// Number of islands.
    pub length: usize,
    /// Charging-to-Josephson energy ratio `(2e)^2 / (E_J C0)`.
    pub u0: T,
    /// Junction-to-ground capacitance ratio `C / C0`.
    pub c_ratio: T,
    /// Gate charge per island, in units of one pair.
    pub gate_charges: Vec<T>,
    /// Josephson energy per junction, in units of the nominal energy.
    pub bond_energies: Vec<T>,
}

impl<T: Float> ChainParams<T> {
    /// Clean chain: zero gate charges, unit bonds.
    pub fn uniform(length: usize, u0: T, c_ratio: T) -> Self {
        Self {
            length,
            u0,
            c_ratio,
            gate_charges: vec![T::zero(); length],
            bond_energies: vec![T::one(); length.saturating_sub(1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidParameter(
                "chain length must be at least 1".into(),
            ));
        }
        if !self.u0.is_finite() || self.u0 < T::zero() {
            return Err(Error::InvalidParameter(format!(
                "u0 must be finite and non-negative, got {}",
                self.u0
            )));
        }
        if !self.c_ratio.is_finite() || self.c_ratio < T::zero() {
            return Err(Error::InvalidParameter(format!(
                "c_ratio must be finite and non-negative, got {}",
                self.c_ratio
            )));
        }
        if self.gate_charges.len() != self.length {
            return Err(Error::DimensionMismatch {
                what: "gate_charges",
                expected: self.length,
                got: self.gate_charges.len(),
            });
        }
        if self.bond_energies.len() != self.length - 1 {
            return Err(Error::DimensionMismatch {
                what: "bond_energies",
                expected: self.length - 1,
                got: self.bond_energies.len(),
            });
        }
        if self.gate_charges.iter().any(|q| !q.is_finite()) {
            return Err(Error::InvalidParameter("non-finite gate charge".into()));
        }
        if self.bond_energies.iter().any(|e| !e.is_finite() || *e <= T::zero()) {
            return Err(Error::InvalidParameter(
                "bond energies must be finite and positive".into(),
            ));
        }
        Ok(())
    }
}

/// Hamiltonian of the single-pair sector, in units of the nominal Josephson
/// energy. The vacuum energy is identically zero and is not stored.
#[derive(Debug, Clone)]
pub struct ChargeSectorHamiltonian<T: Float> {
    matrix: DMatrix<T>,
}

impl<T: Float> ChargeSectorHamiltonian<T> {
    pub fn length(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    /// Wraps an explicit real-symmetric sector matrix. Intended for
    /// synthetic spectra in tests and for derived generators; production
    /// code should go through [`build_hamiltonian`].
    pub fn from_matrix(matrix: DMatrix<T>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::InvalidParameter(
                "sector matrix must be square and non-empty".into(),
            ));
        }
        let asym = (&matrix - matrix.transpose())
            .iter()
            .fold(T::zero(), |a, x| a.max(x.abs()));
        if asym > T::epsilon() * real::<T>(100.0) {
            return Err(Error::InvalidParameter(format!(
                "sector matrix must be symmetric, asymmetry {asym}"
            )));
        }
        Ok(Self { matrix })
    }
}

/// Builds the single-pair sector Hamiltonian from chain parameters and the
/// matching capacitance model.
pub fn build_hamiltonian<T: Float>(
    params: &ChainParams<T>,
    model: &CapacitanceModel<T>,
) -> Result<ChargeSectorHamiltonian<T>> {
    params.validate()?;
    if model.length() != params.length {
        return Err(Error::DimensionMismatch {
            what: "capacitance model",
            expected: params.length,
            got: model.length(),
        });
    }
    if model.c_ratio() != params.c_ratio {
        return Err(Error::InvalidParameter(format!(
            "capacitance model built for c_ratio {}, parameters say {}",
            model.c_ratio(),
            params.c_ratio
        )));
    }

    let l = params.length;
    let w = model.inverse();
    let half_u0 = params.u0 * real::<T>(0.5);
    let mut h = DMatrix::<T>::zeros(l, l);
    for j in 0..l {
        let mut gate = T::zero();
        for i in 0..l {
            gate += w[(i, j)] * params.gate_charges[i];
        }
        h[(j, j)] = half_u0 * (w[(j, j)] - real::<T>(2.0) * gate);
        if j + 1 < l {
            let hop = -params.bond_energies[j] * real::<T>(0.5);
            h[(j, j + 1)] = hop;
            h[(j + 1, j)] = hop;
        }
    }
    Ok(ChargeSectorHamiltonian { matrix: h })
}

/// Gaussian disorder on junction energies and gate charges.
///
/// Draws are always taken in `f64` and then converted to the working
/// precision, so a given `(seed, index)` pair yields bit-identical
/// realizations regardless of where in a batch it is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisorderSpec {
    /// Relative standard deviation of the bond energies.
    pub bond_sigma: f64,
    /// Standard deviation of the gate-charge offsets, in pair units.
    pub charge_sigma: f64,
    /// Master seed of the ensemble.
    pub seed: u64,
}

impl DisorderSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.bond_sigma.is_finite() || self.bond_sigma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "bond_sigma must be finite and non-negative, got {}",
                self.bond_sigma
            )));
        }
        if !self.charge_sigma.is_finite() || self.charge_sigma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "charge_sigma must be finite and non-negative, got {}",
                self.charge_sigma
            )));
        }
        Ok(())
    }
}

/// Stable per-realization seed: SplitMix64 finalizer over the master seed
/// advanced by the realization index times the 64-bit golden ratio. This
/// mapping is part of the reproducibility contract and must not change.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws realization `index` of the disorder ensemble around `base`.
///
/// Bond energies are resampled from `1 + bond_sigma * g` until positive;
/// gate charges are `base + charge_sigma * h` with no resampling. Bonds for
/// all junctions are drawn before any gate charge, in island order.
pub fn sample_disorder<T: Float>(
    spec: &DisorderSpec,
    base: &ChainParams<T>,
    index: u64,
) -> Result<ChainParams<T>> {
    spec.validate()?;
    base.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, index));
    let mut params = base.clone();
    for bond in params.bond_energies.iter_mut() {
        let value = loop {
            let g: f64 = rng.sample(StandardNormal);
            let v = 1.0 + spec.bond_sigma * g;
            if v > 0.0 {
                break v;
            }
        };
        *bond = real::<T>(value);
    }
    for (charge, base_charge) in params.gate_charges.iter_mut().zip(&base.gate_charges) {
        let h: f64 = rng.sample(StandardNormal);
        *charge = *base_charge + real::<T>(spec.charge_sigma * h);
    }
    Ok(params)
}
