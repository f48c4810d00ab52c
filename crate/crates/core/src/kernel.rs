//! Wendland C6 smoothing kernel in three dimensions.
//!
//! `W(r, h) = C / h^3 * (1 - q)^8 * (1 + 8q + 25q^2 + 32q^3)` for
//! `q = r / h < 1` and zero beyond, with `C = 1365 / (64 pi)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// 1365 / (64 pi), normalising the kernel to unit volume integral.
pub const WENDLAND_C6_NORM: f64 = 1365.0 / (64.0 * std::f64::consts::PI);

#[derive(Debug, Error, PartialEq)]
#[error("smoothing length must be positive, got {0}")]
pub struct InvalidSmoothingLength(pub f64);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    #[default]
    WendlandC6,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec<T> {
    pub kind: KernelKind,
    pub normalization: T,
}

impl<T: Real> Default for KernelSpec<T> {
    fn default() -> Self {
        Self {
            kind: KernelKind::WendlandC6,
            normalization: T::lit(WENDLAND_C6_NORM),
        }
    }
}

impl<T: Real> KernelSpec<T> {
    pub fn w(&self, r: T, h: T) -> Result<T, InvalidSmoothingLength> {
        if !(h > T::zero()) {
            return Err(InvalidSmoothingLength(h.widen()));
        }
        let q = r / h;
        if q >= T::one() {
            return Ok(T::zero());
        }
        Ok(self.normalization / (h * h * h) * shape(q))
    }
}

/// Unnormalised profile `(1 - q)^8 (1 + 8q + 25q^2 + 32q^3)`; zero at q = 1.
#[inline(always)]
pub fn shape<T: Real>(q: T) -> T {
    let t = T::one() - q;
    let t2 = t * t;
    let t4 = t2 * t2;
    let t8 = t4 * t4;
    let poly = T::one() + q * (T::lit(8.0) + q * (T::lit(25.0) + q * T::lit(32.0)));
    t8 * poly
}

pub fn kernel_w<T: Real>(r: T, h: T) -> Result<T, InvalidSmoothingLength> {
    KernelSpec::default().w(r, h)
}
