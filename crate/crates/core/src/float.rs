// Copyright 2026 jjchain contributors
// SPDX-License-Identifier: Apache-2.0

//! Scalar abstraction for the numeric core.
//!
//! Everything in the library is generic over [`Float`], which bundles the
//! `nalgebra` field traits with the `num-traits` conversions the solvers
//! need. `f64` is the working precision for production runs and for every
//! stated tolerance; `f32` builds are supported for quick scans where memory
//! or throughput matters more than the last digits.

use std::fmt;

/// Floating-point scalar the chain model is instantiated with.
pub trait Float:
    'static
    + Copy
    + Default
    + Send
    + Sync
    + fmt::Debug
    + fmt::Display
    + nalgebra::RealField
    + num_traits::Num
    + num_traits::NumAssign
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
{
    /// Machine epsilon, the unit roundoff of the representation.
    fn epsilon() -> Self;
}

impl Float for f32 {
    fn epsilon() -> f32 {
        f32::EPSILON
    }
}

impl Float for f64 {
    fn epsilon() -> f64 {
        f64::EPSILON
    }
}

/// Pulls an `f64` literal into the working precision.
#[inline]
pub fn real<T: Float>(x: f64) -> T {
    T::from_f64(x).expect("literal must be representable")
}

/// Converts a count into the working precision.
#[inline]
pub fn real_of<T: Float>(n: usize) -> T {
    T::from_usize(n).expect("count must be representable")
}
