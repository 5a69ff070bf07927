//! Cyclic representations on `C^N` and the maps between them.
//!
//! `A e_k = q^{2k} e_k` and `B e_k = e_{k+1}` (indices mod `N`), so `AB = q^2 BA`.
//! `μ_λ(X) = x^{1/N} A`, `μ_λ(Y) = y^{1/N} B`.

use nalgebra::DVector;
use serde_json::{json, Value};

use crate::cyclotomic::{RootContext, C64};
use crate::error::Result;
use crate::qdilog::DilogParams;
use crate::tensorlinalg::{embed, kron, perm_op, TensorOperator};
use crate::weights::{require_regular, Weight};

const ONE: C64 = C64 { re: 1.0, im: 0.0 };

pub fn gen_a(ctx: &RootContext) -> TensorOperator {
    TensorOperator::monomial(ctx.n(), 1, |k| (k, ctx.q_pow(2 * k as i64)))
}

pub fn gen_b(ctx: &RootContext) -> TensorOperator {
    let n = ctx.n();
    TensorOperator::monomial(n, 1, |k| ((k + 1) % n, ONE))
}

/// `A^p` on factor `pos` of `arity` factors.
pub fn a_at(ctx: &RootContext, p: i64, pos: usize, arity: usize) -> Result<TensorOperator> {
    let n = ctx.n();
    let a = TensorOperator::monomial(n, 1, |k| (k, ctx.q_pow(2 * p * k as i64)));
    embed(&a, &[pos], arity)
}

/// `B^p` on factor `pos` of `arity` factors.
pub fn b_at(ctx: &RootContext, p: i64, pos: usize, arity: usize) -> Result<TensorOperator> {
    let n = ctx.n();
    let shift = p.rem_euclid(n as i64) as usize;
    let b = TensorOperator::monomial(n, 1, |k| ((k + shift) % n, ONE));
    embed(&b, &[pos], arity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepKind {
    Cyclic,
    LeftDual,
    RightDual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gen {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rep {
    pub weight: Weight,
    pub x: TensorOperator,
    pub y: TensorOperator,
    pub kind: RepKind,
}

impl Rep {
    /// `(x, y)` with `X^N = x` and `Y^N = y`.
    pub fn effective_weight(&self) -> Result<Weight> {
        match self.kind {
            RepKind::Cyclic => Ok(self.weight),
            _ => self.weight.dual(),
        }
    }

    pub fn gen(&self, g: Gen) -> &TensorOperator {
        match g {
            Gen::X => &self.x,
            Gen::Y => &self.y,
        }
    }

    /// Largest relative residual among `XY = q²YX`, `X^N = x`, `Y^N = y`.
    pub fn invariant_residual(&self, ctx: &RootContext) -> Result<f64> {
        let n = ctx.n() as i64;
        let eff = self.effective_weight()?;
        let xy = self.x.try_mul(&self.y)?;
        let yx = self.y.try_mul(&self.x)?.scale(ctx.q_pow(2));
        let id = TensorOperator::identity(ctx.n(), 1);
        let r1 = xy.rel_diff(&yx)?;
        let r2 = id.scale(eff.x).rel_diff(&self.x.pow(n)?)?;
        let r3 = id.scale(eff.y).rel_diff(&self.y.pow(n)?)?;
        Ok(r1.max(r2).max(r3))
    }

    pub fn to_json(&self) -> Value {
        json!({
            "weight": self.weight,
            "kind": format!("{:?}", self.kind),
            "X": self.x.to_json(),
            "Y": self.y.to_json(),
        })
    }
}

pub fn rep_mu(ctx: &RootContext, l: &Weight) -> Result<Rep> {
    require_regular(&[*l])?;
    Ok(Rep {
        weight: *l,
        x: gen_a(ctx).scale(ctx.nth_root(l.x)?),
        y: gen_b(ctx).scale(ctx.nth_root(l.y)?),
        kind: RepKind::Cyclic,
    })
}

fn dual_rep(ctx: &RootContext, l: &Weight, kind: RepKind) -> Result<Rep> {
    require_regular(&[*l])?;
    let ainv = a_at(ctx, -1, 1, 1)?;
    let binv = b_at(ctx, -1, 1, 1)?;
    let xr = ctx.nth_root(l.x)?.inv();
    let yc = -ctx.nth_root(l.y)? * xr;
    let y = match kind {
        RepKind::LeftDual => ainv.try_mul(&binv)?,
        _ => binv.try_mul(&ainv)?,
    };
    Ok(Rep {
        weight: *l,
        x: ainv.scale(xr),
        y: y.scale(yc),
        kind,
    })
}

/// The left dual action `μ*_λ`: `X ↦ x^{-1/N} A^{-1}`, `Y ↦ −y^{1/N} x^{-1/N} A^{-1}B^{-1}`.
pub fn rep_dual_left(ctx: &RootContext, l: &Weight) -> Result<Rep> {
    dual_rep(ctx, l, RepKind::LeftDual)
}

/// The right dual action `*μ_λ`: as the left one with `Y ↦ −y^{1/N} x^{-1/N} B^{-1}A^{-1}`.
pub fn rep_dual_right(ctx: &RootContext, l: &Weight) -> Result<Rep> {
    dual_rep(ctx, l, RepKind::RightDual)
}

/// Action of `X` or `Y` on a tensor product through `ΔX = X⊗X`, `ΔY = Y⊗X + 1⊗Y`.
pub fn tensor_action(reps: &[&Rep], g: Gen) -> Result<TensorOperator> {
    let k = reps.len();
    let n = reps
        .first()
        .ok_or_else(|| crate::error::QtError::DimensionMismatch("empty tensor product".into()))?
        .x
        .n();
    let xs: Vec<&TensorOperator> = reps.iter().map(|r| &r.x).collect();
    match g {
        Gen::X => kron(&xs),
        Gen::Y => {
            let id = TensorOperator::identity(n, 1);
            let mut acc = TensorOperator::zeros(n, k);
            for i in 0..k {
                let mut factors: Vec<&TensorOperator> = Vec::with_capacity(k);
                factors.extend(std::iter::repeat(&id).take(i));
                factors.push(&reps[i].y);
                factors.extend(xs[i + 1..].iter().copied());
                acc = acc.try_add(&kron(&factors)?)?;
            }
            Ok(acc)
        }
    }
}

fn reflection(ctx: &RootContext, l: &Weight, sign: i64) -> Result<TensorOperator> {
    require_regular(&[*l])?;
    let m = ctx.cocycle_m(l.y, l.x.inv())?;
    let n = ctx.n();
    Ok(TensorOperator::monomial(n, 1, |i| {
        let ii = i as i64;
        let e = -2 * ii * m + sign * ii * (ii - 1);
        ((n - i) % n, ctx.q_pow(e))
    }))
}

/// `C_λ : e_i ↦ q^{-2i·m_{y,x^{-1}}} q^{-i(i-1)} e_{-i}`.
pub fn c_map(ctx: &RootContext, l: &Weight) -> Result<TensorOperator> {
    reflection(ctx, l, -1)
}

/// `D_λ : e_i ↦ q^{-2i·m_{y,x^{-1}}} q^{i(i-1)} e_{-i}`.
pub fn d_map(ctx: &RootContext, l: &Weight) -> Result<TensorOperator> {
    reflection(ctx, l, 1)
}

/// `S : e_i ⊗ e_j ↦ e_i ⊗ e_{i+j}`.
pub fn s_map(ctx: &RootContext) -> TensorOperator {
    let n = ctx.n();
    TensorOperator::monomial(n, 2, |col| {
        let (i, j) = (col / n, col % n);
        (i * n + (i + j) % n, ONE)
    })
}

/// `S^{-1} : e_i ⊗ e_j ↦ e_i ⊗ e_{j-i}`.
pub fn s_inv(ctx: &RootContext) -> TensorOperator {
    let n = ctx.n();
    TensorOperator::monomial(n, 2, |col| {
        let (i, j) = (col / n, col % n);
        (i * n + (j + n - i) % n, ONE)
    })
}

/// `B_1 A_2 B_2^{-1}` on two factors, the argument of the dilogarithm in `F`.
pub fn f_argument(ctx: &RootContext) -> Result<TensorOperator> {
    let ab = gen_a(ctx).try_mul(&b_at(ctx, -1, 1, 1)?)?;
    kron(&[&gen_b(ctx), &ab])
}

/// `F_{λ,λ'} = B_2^{-m_{x,x'}} S Φ(B_1 A_2 B_2^{-1})`, mapping `V_λ ⊗ V_{λ'}`
/// onto `M ⊗ V_{λλ'}` with `M` the first factor.
pub fn f_map(ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<TensorOperator> {
    let p = DilogParams::from_pair(ctx, l, lp)?;
    let m = ctx.cocycle_m(l.x, lp.x)?;
    let phi = p.phi(ctx, &f_argument(ctx)?)?;
    TensorOperator::product(&[&b_at(ctx, -m, 2, 2)?, &s_map(ctx), &phi])
}

/// `F_{λ,λ'}^{-1} = Φ(B_1 A_2 B_2^{-1})^{-1} S^{-1} B_2^{m_{x,x'}}`.
pub fn f_inv(ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<TensorOperator> {
    let p = DilogParams::from_pair(ctx, l, lp)?;
    let m = ctx.cocycle_m(l.x, lp.x)?;
    let phi_inv = p.phi_inv(ctx, &f_argument(ctx)?)?;
    TensorOperator::product(&[&phi_inv, &s_inv(ctx), &b_at(ctx, m, 2, 2)?])
}

/// `Σ_i f_i e_i ⊗ e_{-i}` with `f_i = r^i q^{-i(i-1)}`, `r = −y^{1/N} x'^{1/N} / y'^{1/N}`.
///
/// Lies in the kernel of the `Y`-action on `V_λ ⊗ V_{λ'}` exactly when `−yx'/y' = 1`.
pub fn y_kernel_vector(ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<DVector<C64>> {
    require_regular(&[*l])?;
    require_regular(&[*lp])?;
    let n = ctx.n();
    let r = -ctx.nth_root(l.y)? * ctx.nth_root(lp.x)? / ctx.nth_root(lp.y)?;
    let mut v = DVector::from_element(n * n, C64::new(0.0, 0.0));
    for i in 0..n {
        let ii = i as i64;
        v[i * n + (n - i) % n] = r.powi(i as i32) * ctx.q_pow(-ii * (ii - 1));
    }
    Ok(v)
}

/// `P_{(12)} X P_{(12)}` for a two-factor operator.
pub fn swap21(ctx: &RootContext, x: &TensorOperator) -> Result<TensorOperator> {
    let p = perm_op(ctx.n(), &[2, 1])?;
    TensorOperator::product(&[&p, x, &p])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorlinalg::{commutant_dim, ev_contract, intertwiner_dim};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn w(x: f64, y: f64) -> Weight {
        Weight::real(x, y).unwrap()
    }

    fn basis(n: usize, i: usize) -> DVector<C64> {
        let mut v = DVector::from_element(n, C64::new(0.0, 0.0));
        v[i] = ONE;
        v
    }

    #[test]
    fn generators() {
        let ctx = RootContext::new(5).unwrap();
        let (a, b) = (gen_a(&ctx), gen_b(&ctx));
        assert!((a.apply(&basis(5, 1)) - basis(5, 1) * ctx.q_pow(2)).norm() < 1e-15);
        assert_eq!(b.apply(&basis(5, 4)), basis(5, 0));
        let ab = a.try_mul(&b).unwrap();
        let ba = b.try_mul(&a).unwrap().scale(ctx.q_pow(2));
        assert!(ab.rel_diff(&ba).unwrap() < 1e-15);
        let id = TensorOperator::identity(5, 1);
        assert!(id.rel_diff(&a.pow(5).unwrap()).unwrap() < 1e-14);
        assert_eq!(b.pow(5).unwrap(), id);
        assert!(a.try_mul(&a.adjoint()).unwrap().rel_diff(&id).unwrap() < 1e-15);
    }

    #[test]
    fn reps_satisfy_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [3, 5, 7] {
            let ctx = RootContext::new(n).unwrap();
            for _ in 0..5 {
                let l = Weight::sample(&mut rng);
                for r in [rep_mu(&ctx, &l), rep_dual_left(&ctx, &l), rep_dual_right(&ctx, &l)] {
                    assert!(r.unwrap().invariant_residual(&ctx).unwrap() < 1e-12);
                }
            }
        }
        let ctx = RootContext::new(3).unwrap();
        let r = rep_mu(&ctx, &w(1.0, 1.0)).unwrap();
        assert!(r.x.rel_diff(&gen_a(&ctx)).unwrap() < 1e-15);
        assert!(r.y.rel_diff(&gen_b(&ctx)).unwrap() < 1e-15);
    }

    #[test]
    fn irreducible_and_classified() {
        let ctx = RootContext::new(3).unwrap();
        let l = w(2.0, 1.0);
        let r = rep_mu(&ctx, &l).unwrap();
        assert_eq!(commutant_dim(3, &[&r.x, &r.y], 1e-9).unwrap(), 1);
        let s = rep_mu(&ctx, &w(3.0, 1.0)).unwrap();
        assert_eq!(intertwiner_dim(3, &[(&r.x, &s.x), (&r.y, &s.y)], 1e-9).unwrap(), 0);
        // the dual actions are isomorphic to the cyclic one of the dual weight
        let d = rep_mu(&ctx, &l.dual().unwrap()).unwrap();
        let left = rep_dual_left(&ctx, &l).unwrap();
        assert_eq!(intertwiner_dim(3, &[(&d.x, &left.x), (&d.y, &left.y)], 1e-9).unwrap(), 1);
    }

    #[test]
    fn tensor_scalars() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ctx = RootContext::new(3).unwrap();
        let ws = Weight::sample_regular(&mut rng, 2);
        let (r1, r2) = (rep_mu(&ctx, &ws[0]).unwrap(), rep_mu(&ctx, &ws[1]).unwrap());
        let x = tensor_action(&[&r1, &r2], Gen::X).unwrap();
        let y = tensor_action(&[&r1, &r2], Gen::Y).unwrap();
        let id = TensorOperator::identity(3, 2);
        let prod = ws[0].mul(&ws[1]);
        assert!(id.scale(prod.x).rel_diff(&x.pow(3).unwrap()).unwrap() < 1e-12);
        assert!(id.scale(prod.y).rel_diff(&y.pow(3).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn kernel_vector_when_singular() {
        let ctx = RootContext::new(5).unwrap();
        // -y x' / y' = 1
        let l = Weight::new(C64::new(0.7, 0.2), C64::new(1.3, -0.4)).unwrap();
        let xp = C64::new(-0.5, 1.1);
        let lp = Weight::new(xp, -l.y * xp).unwrap();
        let (r1, r2) = (rep_mu(&ctx, &l).unwrap(), rep_mu(&ctx, &lp).unwrap());
        let y = tensor_action(&[&r1, &r2], Gen::Y).unwrap();
        let v = y_kernel_vector(&ctx, &l, &lp).unwrap();
        assert!(v.norm() > 1.0);
        assert!(y.apply(&v).norm() < 1e-12 * v.norm());
    }

    #[test]
    fn c_and_d_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [3, 5, 7] {
            let ctx = RootContext::new(n).unwrap();
            let l = Weight::sample(&mut rng);
            let m = ctx.cocycle_m(l.y, l.x.inv()).unwrap();
            let (c, d) = (c_map(&ctx, &l).unwrap(), d_map(&ctx, &l).unwrap());
            let (a, b) = (gen_a(&ctx), gen_b(&ctx));
            let ainv = a.inverse().unwrap();
            let binv = b.inverse().unwrap();
            let tol = 1e-12;
            assert!(d.try_mul(&c).unwrap().rel_diff(&a).unwrap() < tol);
            assert!(c.try_mul(&d).unwrap().rel_diff(&ainv).unwrap() < tol);
            let cinv = c.inverse().unwrap();
            let dinv = d.inverse().unwrap();
            let conj = |u: &TensorOperator, inv: &TensorOperator, x: &TensorOperator| {
                TensorOperator::product(&[inv, x, u]).unwrap()
            };
            assert!(conj(&c, &cinv, &a).rel_diff(&ainv).unwrap() < tol);
            let expect = ainv.try_mul(&binv).unwrap().scale(ctx.q_pow(-2 * m));
            assert!(conj(&c, &cinv, &b).rel_diff(&expect).unwrap() < tol);
            let expect = a.try_mul(&binv).unwrap().scale(ctx.q_pow(-2 * m));
            assert!(conj(&d, &dinv, &b).rel_diff(&expect).unwrap() < tol);

            // module maps: C^{-1}: V_{λ*} → V_λ^*, D^{-1}: ^*V_λ → V_{λ*}
            let mu_dual = rep_mu(&ctx, &l.dual().unwrap()).unwrap();
            let left = rep_dual_left(&ctx, &l).unwrap();
            let right = rep_dual_right(&ctx, &l).unwrap();
            for g in [Gen::X, Gen::Y] {
                let lhs = cinv.try_mul(mu_dual.gen(g)).unwrap();
                let rhs = left.gen(g).try_mul(&cinv).unwrap();
                assert!(lhs.rel_diff(&rhs).unwrap() < tol);
                let lhs = dinv.try_mul(right.gen(g)).unwrap();
                let rhs = mu_dual.gen(g).try_mul(&dinv).unwrap();
                assert!(lhs.rel_diff(&rhs).unwrap() < tol);
            }
        }
    }

    #[test]
    fn ev_lemmas() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [3, 5] {
            let ctx = RootContext::new(n).unwrap();
            let l = Weight::sample(&mut rng);
            let ld = l.dual().unwrap();
            let a2inv = a_at(&ctx, -1, 2, 2).unwrap();
            let a2 = a_at(&ctx, 1, 2, 2).unwrap();
            let cases = [
                (kron(&[&c_map(&ctx, &l).unwrap(), &d_map(&ctx, &ld).unwrap()]).unwrap(), TensorOperator::identity(n, 2)),
                (kron(&[&d_map(&ctx, &l).unwrap().inverse().unwrap(), &d_map(&ctx, &ld).unwrap()]).unwrap(), a2inv),
                (kron(&[&c_map(&ctx, &ld).unwrap().inverse().unwrap(), &c_map(&ctx, &l).unwrap()]).unwrap(), a2),
            ];
            for (lhs, rhs) in cases {
                for col in 0..n * n {
                    let mut e = DVector::from_element(n * n, C64::new(0.0, 0.0));
                    e[col] = ONE;
                    let u = ev_contract(&lhs.apply(&e), n, 2, 1, 2).unwrap()[0];
                    let v = ev_contract(&rhs.apply(&e), n, 2, 1, 2).unwrap()[0];
                    assert!((u - v).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn shear() {
        let ctx = RootContext::new(3).unwrap();
        let s = s_map(&ctx);
        let e = |i: usize, j: usize| {
            let mut v = DVector::from_element(9, C64::new(0.0, 0.0));
            v[i * 3 + j] = ONE;
            v
        };
        for j in 0..3 {
            assert_eq!(s.apply(&e(0, j)), e(0, j));
        }
        assert_eq!(s.apply(&e(1, 2)), e(1, 0));
        assert_eq!(s.try_mul(&s_inv(&ctx)).unwrap(), TensorOperator::identity(3, 2));
        // A_2 S = S A_1 A_2, B_2 S = S B_2, A_1 S = S A_1, B_1 S = S B_1 B_2^{-1}
        let op = |f: fn(&RootContext, i64, usize, usize) -> Result<TensorOperator>, p, pos| f(&ctx, p, pos, 2).unwrap();
        let (a1, a2, b1, b2) = (op(a_at, 1, 1), op(a_at, 1, 2), op(b_at, 1, 1), op(b_at, 1, 2));
        let b2inv = op(b_at, -1, 2);
        let chk = |l: TensorOperator, r: TensorOperator| assert!(l.rel_diff(&r).unwrap() < 1e-14);
        chk(a2.try_mul(&s).unwrap(), TensorOperator::product(&[&s, &a1, &a2]).unwrap());
        chk(b2.try_mul(&s).unwrap(), s.try_mul(&b2).unwrap());
        chk(a1.try_mul(&s).unwrap(), s.try_mul(&a1).unwrap());
        chk(b1.try_mul(&s).unwrap(), TensorOperator::product(&[&s, &b1, &b2inv]).unwrap());
    }

    #[test]
    fn f_intertwines_and_inverts() {
        let ctx = RootContext::new(3).unwrap();
        let (l, lp) = (w(2.0, 1.0), w(3.0, 1.0));
        let f = f_map(&ctx, &l, &lp).unwrap();
        let fi = f_inv(&ctx, &l, &lp).unwrap();
        let id = TensorOperator::identity(3, 2);
        assert!(id.rel_diff(&fi.try_mul(&f).unwrap()).unwrap() < 1e-12);
        assert!(id.rel_diff(&f.try_mul(&fi).unwrap()).unwrap() < 1e-12);
        let (r1, r2) = (rep_mu(&ctx, &l).unwrap(), rep_mu(&ctx, &lp).unwrap());
        let r12 = rep_mu(&ctx, &l.mul(&lp)).unwrap();
        for g in [Gen::X, Gen::Y] {
            let lhs = f.try_mul(&tensor_action(&[&r1, &r2], g).unwrap()).unwrap();
            let rhs = embed(r12.gen(g), &[2], 2).unwrap().try_mul(&f).unwrap();
            assert!(lhs.rel_diff(&rhs).unwrap() < 1e-12);
        }
        let arg = f_argument(&ctx).unwrap();
        assert!(id.rel_diff(&arg.pow(3).unwrap()).unwrap() < 1e-13);
    }
}
