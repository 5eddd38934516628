// Copyright 2026 jjchain contributors
// SPDX-License-Identifier: Apache-2.0

//! Error type shared by all chain-model operations.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two inputs that must agree in size did not.
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A peak search ran off the end of its series without finding a
    /// qualifying interior maximum.
    #[error("no interior maximum: {0}")]
    NoInteriorMaximum(String),

    /// A solver or integrator left its validated regime (non-finite values,
    /// violated state invariants, failed factorization).
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

pub type Result<V> = std::result::Result<V, Error>;
