//! Weights `λ = (x, y)` labelling the cyclic irreducibles, with the
//! product `λλ' = (xx', yx' + y')` and the dual `λ* = (x^{-1}, -yx^{-1})`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::cyclotomic::C64;
use crate::error::{QtError, Result};

/// A weight component with modulus below this is treated as singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "WeightRepr", into = "WeightRepr")]
pub struct Weight {
    pub x: C64,
    pub y: C64,
}

#[derive(Serialize, Deserialize)]
struct WeightRepr {
    x: [f64; 2],
    y: [f64; 2],
}

impl From<WeightRepr> for Weight {
    fn from(r: WeightRepr) -> Self {
        Weight::unchecked(C64::new(r.x[0], r.x[1]), C64::new(r.y[0], r.y[1]))
    }
}

impl From<Weight> for WeightRepr {
    fn from(w: Weight) -> Self {
        WeightRepr {
            x: [w.x.re, w.x.im],
            y: [w.y.re, w.y.im],
        }
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Weight {
    /// A non-singular weight.
    pub fn new(x: C64, y: C64) -> Result<Self> {
        let w = Self::unchecked(x, y);
        if w.is_singular() {
            return Err(QtError::SingularWeight(w.to_string()));
        }
        Ok(w)
    }

    /// Real-valued shorthand for [`Weight::new`].
    pub fn real(x: f64, y: f64) -> Result<Self> {
        Self::new(C64::new(x, 0.0), C64::new(y, 0.0))
    }

    /// No singularity check; needed for the identity weight `(1, 0)`.
    pub fn unchecked(x: C64, y: C64) -> Self {
        Self { x, y }
    }

    pub fn identity() -> Self {
        Self::unchecked(C64::new(1.0, 0.0), C64::new(0.0, 0.0))
    }

    pub fn is_singular(&self) -> bool {
        self.x.norm() < SINGULAR_THRESHOLD || self.y.norm() < SINGULAR_THRESHOLD
    }

    pub fn mul(&self, other: &Weight) -> Weight {
        Weight::unchecked(self.x * other.x, self.y * other.x + other.y)
    }

    pub fn dual(&self) -> Result<Weight> {
        if self.is_singular() {
            return Err(QtError::SingularWeight(self.to_string()));
        }
        let xi = self.x.inv();
        Ok(Weight::unchecked(xi, -self.y * xi))
    }

    /// Componentwise comparison relative to the larger modulus.
    pub fn approx_eq(&self, other: &Weight, tol: f64) -> bool {
        let sx = 1.0f64.max(self.x.norm()).max(other.x.norm());
        let sy = 1.0f64.max(self.y.norm()).max(other.y.norm());
        (self.x - other.x).norm() <= tol * sx && (self.y - other.y).norm() <= tol * sy
    }

    /// Random weight: modulus log-uniform in `[1/2, 2]`, uniform phase.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Weight {
        let mut comp = || {
            let r = (rng.gen_range(-1.0..1.0) * std::f64::consts::LN_2).exp();
            C64::from_polar(r, rng.gen_range(0.0..2.0 * PI))
        };
        let x = comp();
        let y = comp();
        Weight::unchecked(x, y)
    }

    /// Random regular sequence of the given length, by rejection.
    pub fn sample_regular<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<Weight> {
        loop {
            let seq: Vec<Weight> = (0..len).map(|_| Weight::sample(rng)).collect();
            if is_regular_seq(&seq) {
                return seq;
            }
        }
    }
}

/// Product of a sequence of weights, left to right.
pub fn product(seq: &[Weight]) -> Weight {
    seq.iter().fold(Weight::identity(), |acc, w| acc.mul(w))
}

pub fn is_regular_pair(a: &Weight, b: &Weight) -> bool {
    !a.is_singular() && !b.is_singular() && !a.mul(b).is_singular()
}

/// Every contiguous product `λ_i ⋯ λ_j` is non-singular.
pub fn is_regular_seq(seq: &[Weight]) -> bool {
    first_singular_product(seq).is_none()
}

/// The first contiguous range `(i, j)` (inclusive, 0-based) whose product is singular.
pub fn first_singular_product(seq: &[Weight]) -> Option<(usize, usize)> {
    for i in 0..seq.len() {
        let mut acc = Weight::identity();
        for (j, w) in seq.iter().enumerate().skip(i) {
            acc = acc.mul(w);
            if acc.is_singular() {
                return Some((i, j));
            }
        }
    }
    None
}

/// Error describing the first singular contiguous product, if any.
pub fn require_regular(seq: &[Weight]) -> Result<()> {
    match first_singular_product(seq) {
        None => Ok(()),
        Some((i, j)) => Err(QtError::RegularityViolation(format!(
            "product of weights {}..={} is singular: {}",
            i + 1,
            j + 1,
            product(&seq[i..=j])
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn w(x: f64, y: f64) -> Weight {
        Weight::real(x, y).unwrap()
    }

    #[test]
    fn multiplication_examples() {
        assert_eq!(w(2.0, 1.0).mul(&w(3.0, 1.0)), w(6.0, 4.0));
        let l = w(2.0, 1.0);
        assert_eq!(Weight::identity().mul(&l), l);
        assert_eq!(l.mul(&Weight::identity()), l);
        assert_ne!(w(2.0, 1.0).mul(&w(3.0, 1.0)), w(3.0, 1.0).mul(&w(2.0, 1.0)));
    }

    #[test]
    fn dual_examples() {
        assert_eq!(w(2.0, 1.0).dual().unwrap(), w(0.5, -0.5));
        let l = w(2.0, 1.0);
        let d = l.dual().unwrap();
        assert!(l.mul(&d).approx_eq(&Weight::identity(), 1e-15));
        assert!(d.mul(&l).approx_eq(&Weight::identity(), 1e-15));
        assert!(Weight::identity().dual().is_err());
    }

    #[test]
    fn regularity() {
        assert!(!is_regular_pair(&w(1.0, 1.0), &w(1.0, -1.0)));
        assert!(is_regular_pair(&w(2.0, 1.0), &w(3.0, 1.0)));
        assert!(is_regular_seq(&[w(2.0, 1.0)]));
        let a = 1.0;
        let b = std::f64::consts::SQRT_2;
        assert_eq!(is_regular_pair(&w(1.0, a), &w(-1.0, b)), (b - a).abs() > 1e-12);
        assert!(!is_regular_pair(&w(1.0, a), &w(-1.0, a)));
    }

    #[test]
    fn regular_seq_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut seq: Vec<Weight> = (0..3).map(|_| Weight::sample(&mut rng)).collect();
            // force some singular products
            if rng.gen_bool(0.3) {
                seq[1].y = -seq[0].y * seq[1].x;
            }
            let mut all = true;
            for i in 0..3 {
                for j in i..3 {
                    if product(&seq[i..=j]).is_singular() {
                        all = false;
                    }
                }
            }
            assert_eq!(is_regular_seq(&seq), all);
            assert_eq!(require_regular(&seq).is_ok(), all);
        }
    }

    #[test]
    fn sampler_is_seeded_and_in_range() {
        let mut r1 = ChaCha8Rng::seed_from_u64(11);
        let mut r2 = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a = Weight::sample(&mut r1);
            let b = Weight::sample(&mut r2);
            assert_eq!(a, b);
            for c in [a.x, a.y] {
                assert!(c.norm() >= 0.5 - 1e-12 && c.norm() <= 2.0 + 1e-12);
            }
        }
        let seq = Weight::sample_regular(&mut r1, 4);
        assert!(is_regular_seq(&seq));
    }

    #[test]
    fn json_roundtrip() {
        let l = Weight::new(C64::new(2.0, 0.5), C64::new(-1.0, 3.0)).unwrap();
        let s = serde_json::to_string(&l).unwrap();
        assert_eq!(s, r#"{"x":[2.0,0.5],"y":[-1.0,3.0]}"#);
        let back: Weight = serde_json::from_str(&s).unwrap();
        assert_eq!(back, l);
    }
}
