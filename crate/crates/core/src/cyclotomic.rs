//! Root of unity conventions.
//!
//! Everything downstream works with `q = exp(iπ/N)` for odd `N`, so that
//! `q^N = -1` and `q^2` is a primitive `N`-th root of unity.
//!
//! # The N-th root branch
//!
//! The N-th root of a nonzero complex number is fixed once and for all by
//! the rule below. Let `S = {Re z > 0} ∪ {Re z = 0, Im z > 0}`.
//!
//! * `Re z > 0`: the principal root `r^{1/N} e^{iθ/N}` with `θ ∈ (-π/2, π/2)`.
//! * `z = it`, `t > 0`: `ε i t^{1/N}` where `ε = +1` for `N ≡ 1 (mod 4)` and
//!   `ε = -1` for `N ≡ 3 (mod 4)`, so that the N-th power is `i t`.
//! * `z ∉ S`: `-root(-z)`.
//!
//! Since `N` is odd, `(-w)^N = -w^N`, so the last case is a genuine root.
//! The three laws `1^{1/N} = 1`, `(z^{-1})^{1/N} = (z^{1/N})^{-1}` and
//! `(-z)^{1/N} = -z^{1/N}` hold everywhere:
//! `z ↦ -z` swaps `S` and its complement, which gives the sign law;
//! inversion preserves the sign of `Re z` and sends `it` to `-i/t`,
//! and on each piece the chosen root commutes with inversion.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{QtError, Result};

pub type C64 = Complex64;

/// Below this modulus a complex number is treated as zero.
pub const ZERO_THRESHOLD: f64 = 1e-300;

/// Default relative tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Fixed arithmetic context: `N`, `q = exp(iπ/N)` and a tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootContext {
    n: usize,
    q: C64,
    tol: f64,
}

impl RootContext {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_tol(n, DEFAULT_TOL)
    }

    pub fn with_tol(n: usize, tol: f64) -> Result<Self> {
        if n < 3 || n % 2 == 0 {
            return Err(QtError::InvalidN(n));
        }
        if !(tol > 0.0) || !tol.is_finite() {
            return Err(QtError::InvalidTolerance(tol));
        }
        Ok(Self {
            n,
            q: C64::from_polar(1.0, PI / n as f64),
            tol,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> C64 {
        self.q
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Residual threshold `tol·√dim` for an operator of side `dim`.
    pub fn threshold(&self, dim: usize) -> f64 {
        self.tol * (dim as f64).sqrt()
    }

    /// `q^k`, evaluated after reducing `k` modulo `2N`.
    pub fn q_pow(&self, k: i64) -> C64 {
        let two_n = 2 * self.n as i64;
        let r = k.rem_euclid(two_n);
        C64::from_polar(1.0, PI * r as f64 / self.n as f64)
    }

    /// The fixed N-th root branch (see module docs).
    pub fn nth_root(&self, z: C64) -> Result<C64> {
        if z.norm() < ZERO_THRESHOLD {
            return Err(QtError::ZeroInput);
        }
        Ok(self.root_unchecked(z))
    }

    fn root_unchecked(&self, z: C64) -> C64 {
        let inv_n = 1.0 / self.n as f64;
        if z.re > 0.0 {
            let r = z.norm().powf(inv_n);
            let theta = z.im.atan2(z.re);
            C64::from_polar(r, theta * inv_n)
        } else if z.re == 0.0 && z.im > 0.0 {
            let eps = if self.n % 4 == 1 { 1.0 } else { -1.0 };
            C64::new(0.0, eps * z.im.powf(inv_n))
        } else {
            -self.root_unchecked(-z)
        }
    }

    /// The unique `m ∈ {0,…,N-1}` with `(zw)^{1/N} = q^{2m} z^{1/N} w^{1/N}`.
    pub fn cocycle_m(&self, z: C64, w: C64) -> Result<i64> {
        let rz = self.nth_root(z)?;
        let rw = self.nth_root(w)?;
        let rzw = self.nth_root(z * w)?;
        let ratio = rzw / (rz * rw);
        let no_match = || QtError::NoMatch {
            z: format!("{z}"),
            w: format!("{w}"),
        };
        if (ratio.norm() - 1.0).abs() > self.tol {
            return Err(no_match());
        }
        let ang_tol = 10.0 * self.tol;
        let mut found = None;
        for m in 0..self.n as i64 {
            let d = (ratio * self.q_pow(-2 * m)).arg().abs();
            if d <= ang_tol {
                if found.is_some() {
                    return Err(no_match());
                }
                found = Some(m);
            }
        }
        found.ok_or_else(no_match)
    }

    /// Reduce an integer modulo `N` into `{0,…,N-1}`.
    pub fn modn(&self, k: i64) -> i64 {
        k.rem_euclid(self.n as i64)
    }
}
