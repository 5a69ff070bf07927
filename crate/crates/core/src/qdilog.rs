//! The cyclic quantum dilogarithm.
//!
//! For `c^N − a^N = 1` put `w(a,c|0) = 1` and `w(a,c|n) = ∏_{j=1}^n (c − a q^{2j})^{-1}`,
//! which is `N`-periodic in `n`. For an operator `C` with `C^N = id`, `Φ(C)` acts
//! as `w(a,c|i)` on the `q^{2i}`-eigenspace of `C`. The normalising constant is 1.

use crate::cyclotomic::{RootContext, C64};
use crate::error::{QtError, Result};
use crate::report::RelationReport;
use crate::tensorlinalg::{proportionality, TensorOperator, TorsionPowers};
use crate::weights::{require_regular, Weight};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DilogParams {
    pub a: C64,
    pub c: C64,
}

impl DilogParams {
    pub fn new(ctx: &RootContext, a: C64, c: C64) -> Result<Self> {
        let n = ctx.n() as i32;
        let (an, cn) = (a.powi(n), c.powi(n));
        let scale = 1.0f64.max(an.norm()).max(cn.norm());
        if (cn - an - 1.0).norm() > ctx.tol() * scale {
            return Err(QtError::InvalidParams(format!(
                "c^N - a^N = {} for a = {a}, c = {c}",
                cn - an
            )));
        }
        for j in 0..ctx.n() as i64 {
            if (c - a * ctx.q_pow(2 * j)).norm() < 1e-12 {
                return Err(QtError::InvalidParams(format!("c - a q^{} vanishes", 2 * j)));
            }
        }
        Ok(Self { a, c })
    }

    /// The parameters attached to a regular pair:
    /// `a = −y^{1/N} x'^{1/N} / (yx'+y')^{1/N}`, `c = y'^{1/N} / (yx'+y')^{1/N}`.
    pub fn from_pair(ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<Self> {
        require_regular(&[*l, *lp])?;
        let r = |z: C64| ctx.nth_root(z);
        let denom = r(l.y * lp.x + lp.y)?;
        let a = -r(l.y)? * r(lp.x)? / denom;
        let c = r(lp.y)? / denom;
        Self::new(ctx, a, c)
    }

    pub fn w(&self, ctx: &RootContext, n: i64) -> C64 {
        let n = ctx.modn(n);
        let mut acc = C64::new(1.0, 0.0);
        for j in 1..=n {
            acc /= self.c - self.a * ctx.q_pow(2 * j);
        }
        acc
    }

    fn values(&self, ctx: &RootContext, invert: bool) -> Vec<C64> {
        (0..ctx.n() as i64)
            .map(|i| {
                let v = self.w(ctx, i);
                if invert {
                    v.inv()
                } else {
                    v
                }
            })
            .collect()
    }

    /// `Φ(C)`.
    pub fn phi(&self, ctx: &RootContext, c: &TensorOperator) -> Result<TensorOperator> {
        Ok(self.phi_powers(ctx, &TorsionPowers::new(ctx, c)?))
    }

    /// `Φ(C)^{-1}`, by functional calculus with `1/w`.
    pub fn phi_inv(&self, ctx: &RootContext, c: &TensorOperator) -> Result<TensorOperator> {
        Ok(self.phi_inv_powers(ctx, &TorsionPowers::new(ctx, c)?))
    }

    pub fn phi_powers(&self, ctx: &RootContext, p: &TorsionPowers) -> TensorOperator {
        p.functional(ctx, &self.values(ctx, false))
    }

    pub fn phi_inv_powers(&self, ctx: &RootContext, p: &TorsionPowers) -> TensorOperator {
        p.functional(ctx, &self.values(ctx, true))
    }
}

/// Free-function form of [`DilogParams::w`].
pub fn w_cyclic(ctx: &RootContext, p: &DilogParams, n: i64) -> C64 {
    p.w(ctx, n)
}

/// The five parameter pairs and the integer `m` of the pentagon identity
/// attached to a regular triple `(λ, λ', λ'')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PentagonParams {
    pub p: [DilogParams; 5],
    pub m: i64,
}

pub fn pentagon_params(ctx: &RootContext, l: &Weight, lp: &Weight, lpp: &Weight) -> Result<PentagonParams> {
    require_regular(&[*l, *lp, *lpp])?;
    let p1 = DilogParams::from_pair(ctx, l, lp)?;
    let p2 = DilogParams::from_pair(ctx, &l.mul(lp), lpp)?;
    let p3 = DilogParams::from_pair(ctx, lp, lpp)?;
    let p4 = DilogParams::from_pair(ctx, l, &lp.mul(lpp))?;
    let p5 = fifth_pair(ctx, l, lp, lpp)?;
    let m = -ctx.cocycle_m(lp.x, lpp.x)?;
    let pp = PentagonParams {
        p: [p1, p2, p3, p4, p5],
        m,
    };
    check_constraints(ctx, &pp)?;
    Ok(pp)
}

/// `a₅ = −y^{1/N} x'^{1/N} y''^{1/N} / ((yx'+y')^{1/N} (y'x''+y'')^{1/N})`,
/// `c₅ = y'^{1/N} (yx'x''+y'x''+y'')^{1/N} / ((yx'+y')^{1/N} (y'x''+y'')^{1/N})`.
pub fn fifth_pair(ctx: &RootContext, l: &Weight, lp: &Weight, lpp: &Weight) -> Result<DilogParams> {
    require_regular(&[*l, *lp, *lpp])?;
    let r = |z: C64| ctx.nth_root(z);
    let den = r(l.y * lp.x + lp.y)? * r(lp.y * lpp.x + lpp.y)?;
    let a = -r(l.y)? * r(lp.x)? * r(lpp.y)? / den;
    let c = r(lp.y)? * r(l.y * lp.x * lpp.x + lp.y * lpp.x + lpp.y)? / den;
    DilogParams::new(ctx, a, c)
}

fn check_constraints(ctx: &RootContext, pp: &PentagonParams) -> Result<()> {
    let [p1, p2, p3, p4, p5] = pp.p;
    let q2m = ctx.q_pow(2 * pp.m);
    let checks = [
        ("c1 = c4 c5", p1.c, p4.c * p5.c),
        ("a1 c2 = c4 a5", p1.a * p2.c, p4.c * p5.a),
        ("a1 a2 = -q^{2m} a4", p1.a * p2.a, -q2m * p4.a),
        ("c2 = c3 c4", p2.c, p3.c * p4.c),
        ("a2 c5 = a3", p2.a * p5.c, p3.a),
    ];
    for (name, lhs, rhs) in checks {
        let scale = 1.0f64.max(lhs.norm()).max(rhs.norm());
        if (lhs - rhs).norm() > 10.0 * ctx.tol() * scale {
            return Err(QtError::ConstraintViolation(format!("{name}: {lhs} vs {rhs}")));
        }
    }
    Ok(())
}

/// Relative residual of `CD = q^2 DC`.
pub fn commutation_residual(ctx: &RootContext, c: &TensorOperator, d: &TensorOperator) -> Result<f64> {
    let cd = c.try_mul(d)?;
    let dc = d.try_mul(c)?.scale(ctx.q_pow(2));
    cd.rel_diff(&dc)
}

/// Checks `Φ₂(D)Φ₁(C) = α·Φ₅(C)Φ₄(q^{2m}CD)Φ₃(D)` and reports `α`.
pub fn pentagon_check(
    ctx: &RootContext,
    pp: &PentagonParams,
    c: &TensorOperator,
    d: &TensorOperator,
    weights: Vec<Weight>,
) -> Result<RelationReport> {
    let pc = TorsionPowers::new(ctx, c)?;
    let pd = TorsionPowers::new(ctx, d)?;
    let comm = commutation_residual(ctx, c, d)?;
    if comm > ctx.threshold(c.dim()) {
        return Err(QtError::BadCommutation(comm));
    }
    let cd = c.try_mul(d)?.scale(ctx.q_pow(2 * pp.m));
    let pcd = TorsionPowers::new(ctx, &cd)?;
    let [p1, p2, p3, p4, p5] = pp.p;
    let lhs = p2.phi_powers(ctx, &pd).try_mul(&p1.phi_powers(ctx, &pc))?;
    let rhs = TensorOperator::product(&[
        &p5.phi_powers(ctx, &pc),
        &p4.phi_powers(ctx, &pcd),
        &p3.phi_powers(ctx, &pd),
    ])?;
    let (alpha, res) = proportionality(&lhs, &rhs)?;
    Ok(RelationReport::evaluate(
        "phi_pentagon",
        ctx,
        c.dim(),
        res,
        Some(alpha),
        None,
        weights,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reps::{gen_a, gen_b};
    use crate::tensorlinalg::{embed, random_operator};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_params(ctx: &RootContext, rng: &mut ChaCha8Rng) -> DilogParams {
        let pair = Weight::sample_regular(rng, 2);
        DilogParams::from_pair(ctx, &pair[0], &pair[1]).unwrap()
    }

    #[test]
    fn w_values() {
        let ctx = RootContext::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = sample_params(&ctx, &mut rng);
        assert_eq!(p.w(&ctx, 0), C64::new(1.0, 0.0));
        assert!((p.w(&ctx, 1) - (p.c - p.a * ctx.q_pow(2)).inv()).norm() < 1e-14);
        for n in -7..7 {
            assert!((p.w(&ctx, n + 5) - p.w(&ctx, n)).norm() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let ctx = RootContext::new(3).unwrap();
        let one = C64::new(1.0, 0.0);
        assert!(DilogParams::new(&ctx, one, one).is_err());
        assert!(DilogParams::new(&ctx, C64::new(0.0, 0.0), one).is_ok());
    }

    #[test]
    fn phi_of_a_is_diagonal() {
        let ctx = RootContext::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = sample_params(&ctx, &mut rng);
        let phi = p.phi(&ctx, &gen_a(&ctx)).unwrap();
        let diag = TensorOperator::from_fn(5, 1, |r, c| if r == c { p.w(&ctx, r as i64) } else { C64::new(0.0, 0.0) });
        assert!(phi.rel_diff(&diag).unwrap() < 1e-13);
        let prod = phi.try_mul(&p.phi_inv(&ctx, &gen_a(&ctx)).unwrap()).unwrap();
        assert!(prod.rel_diff(&TensorOperator::identity(5, 1)).unwrap() < 1e-13);
    }

    #[test]
    fn non_torsion_rejected() {
        let ctx = RootContext::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = sample_params(&ctx, &mut rng);
        let c = TensorOperator::identity(3, 1).scale(C64::new(2.0, 0.0));
        assert!(matches!(p.phi(&ctx, &c), Err(QtError::NotTorsion(_))));
    }

    #[test]
    fn constraints_for_integer_triple() {
        let ctx = RootContext::new(3).unwrap();
        let w = |x, y| Weight::real(x, y).unwrap();
        let pp = pentagon_params(&ctx, &w(2.0, 1.0), &w(3.0, 1.0), &w(5.0, 1.0)).unwrap();
        let direct = DilogParams::from_pair(&ctx, &w(2.0, 1.0), &w(3.0, 1.0)).unwrap();
        assert_eq!(pp.p[0], direct);
    }

    #[test]
    fn degenerate_commutation() {
        let ctx = RootContext::new(3).unwrap();
        let w = |x, y| Weight::real(x, y).unwrap();
        let pp = pentagon_params(&ctx, &w(2.0, 1.0), &w(3.0, 1.0), &w(5.0, 1.0)).unwrap();
        let err = pentagon_check(&ctx, &pp, &gen_a(&ctx), &TensorOperator::identity(3, 1), vec![]);
        assert!(matches!(err, Err(QtError::BadCommutation(_))));
    }

    #[test]
    fn primitive_pentagon() {
        let ctx = RootContext::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = Weight::sample_regular(&mut rng, 3);
        let pp = pentagon_params(&ctx, &t[0], &t[1], &t[2]).unwrap();
        let rep = pentagon_check(&ctx, &pp, &gen_a(&ctx), &gen_b(&ctx), t).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn conjugation_equivariance() {
        let ctx = RootContext::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = sample_params(&ctx, &mut rng);
        let a = gen_a(&ctx);
        let b = gen_b(&ctx);
        let c = embed(&b, &[1], 2).unwrap().try_mul(&embed(&a, &[2], 2).unwrap()).unwrap();
        let d = random_operator(&mut rng, 3, 2);
        let dinv = d.inverse().unwrap();
        let lhs = TensorOperator::product(&[&d, &p.phi(&ctx, &c).unwrap(), &dinv]).unwrap();
        let conj = TensorOperator::product(&[&d, &c, &dinv]).unwrap();
        let rhs = p.phi(&ctx, &conj).unwrap();
        assert!(lhs.rel_diff(&rhs).unwrap() < 1e-9);
    }
}
