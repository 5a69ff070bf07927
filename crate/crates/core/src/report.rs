//! Outcome of a numerical relation check.

use serde::Serialize;

use crate::cyclotomic::{RootContext, C64};
use crate::weights::Weight;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationReport {
    pub name: String,
    /// Relative Frobenius residual.
    pub residual: f64,
    #[serde(serialize_with = "ser_opt_c64")]
    pub scalar: Option<C64>,
    #[serde(serialize_with = "ser_opt_c64")]
    pub expected_scalar: Option<C64>,
    pub passed: bool,
    pub weights_used: Vec<Weight>,
    #[serde(rename = "N")]
    pub n: usize,
    pub dim: usize,
}

fn ser_opt_c64<S: serde::Serializer>(v: &Option<C64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(z) => [z.re, z.im].serialize(s),
        None => s.serialize_none(),
    }
}

impl RelationReport {
    /// Passes iff `residual ≤ tol·√dim` and, when a scalar is predicted,
    /// `|scalar − expected| ≤ 10·tol·√dim`.
    pub fn evaluate(
        name: impl Into<String>,
        ctx: &RootContext,
        dim: usize,
        residual: f64,
        scalar: Option<C64>,
        expected_scalar: Option<C64>,
        weights_used: Vec<Weight>,
    ) -> Self {
        let thr = ctx.threshold(dim);
        let mut passed = residual.is_finite() && residual <= thr;
        if let (Some(s), Some(e)) = (scalar, expected_scalar) {
            passed &= (s - e).norm() <= 10.0 * thr;
        }
        Self {
            name: name.into(),
            residual,
            scalar,
            expected_scalar,
            passed,
            weights_used,
            n: ctx.n(),
            dim,
        }
    }

    pub fn scalar_error(&self) -> Option<f64> {
        match (self.scalar, self.expected_scalar) {
            (Some(s), Some(e)) => Some((s - e).norm()),
            _ => None,
        }
    }
}
