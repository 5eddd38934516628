// Copyright 2026 jjchain contributors
// SPDX-License-Identifier: Apache-2.0

//! Core library for simulating single-Cooper-pair state transfer along a
//! one-dimensional chain of superconducting islands.
//!
//! The model space is the vacuum (no extra pair anywhere) plus the `L` states
//! with one extra pair on island `j`. On top of that restricted space the
//! library provides:
//!
//! * island electrostatics (tridiagonal capacitance matrix and its inverse),
//! * the charge-sector Hamiltonian with optional bond and gate disorder,
//! * unitary transfer amplitudes and the Bloch-averaged transfer fidelity,
//! * a gate-noise dephasing master equation,
//! * a quasiparticle readout stage with an integrated-current protocol,
//! * batch experiments (length sweeps, disorder ensembles, figure presets).
//!
//! All numerics are generic over the scalar type through [`float::Float`];
//! the `*64` aliases below fix the default double-precision instantiations.

pub mod dephasing;
pub mod electrostatics;
pub mod error;
pub mod experiments;
pub mod float;
pub mod hamiltonian;
pub mod readout;
pub mod unitary;

pub use error::{Error, Result};
pub use float::Float;

/// Double-precision capacitance model.
pub type CapacitanceModel64 = electrostatics::CapacitanceModel<f64>;
/// Double-precision chain parameters.
pub type ChainParams64 = hamiltonian::ChainParams<f64>;
/// Double-precision charge-sector Hamiltonian.
pub type Hamiltonian64 = hamiltonian::ChargeSectorHamiltonian<f64>;
/// Double-precision fidelity series.
pub type FidelitySeries64 = unitary::FidelitySeries<f64>;
/// Double-precision density matrix.
pub type DensityMatrix64 = dephasing::DensityMatrix<f64>;
/// Double-precision readout settings.
pub type ReadoutParams64 = readout::ReadoutParams<f64>;
/// Double-precision study settings.
pub type SweepSpec64 = experiments::SweepSpec<f64>;
