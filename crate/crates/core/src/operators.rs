//! The 6j-symbol `T` and the order-three operator `A`, each built two ways,
//! and checks of the relations they satisfy.
//!
//! `T_{λ,λ',λ''}` maps `M^{λλ'λ''}_{λλ',λ''} ⊗ M^{λλ'}_{λ,λ'}` to
//! `M^{λ'λ''}_{λ',λ''} ⊗ M^{λλ'λ''}_{λ,λ'λ''}`, and `A(λ,λ')` maps
//! `M^{λλ'}_{λ,λ'}` to `M^{λ*}_{λ',(λλ')*}`.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cyclotomic::{RootContext, C64};
use crate::error::{QtError, Result};
use crate::qdilog::{fifth_pair, pentagon_check, pentagon_params, DilogParams};
pub use crate::report::RelationReport;
use crate::reps::{
    a_at, b_at, c_map, d_map, f_argument, f_inv, f_map, gen_a, gen_b, rep_dual_left, rep_dual_right, rep_mu,
    s_inv, swap21, tensor_action, Gen,
};
use crate::tensorlinalg::{
    embed, embedded_product, factor_out, kron, perm_op, proportionality, random_operator, TensorOperator,
};
use crate::weights::{require_regular, Weight};

/// A choice of decomposition maps `F_{λ,λ'}`.
pub trait DecompositionMap {
    fn f(&self, ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<TensorOperator>;
    fn f_inv(&self, ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<TensorOperator>;
}

/// `F = B_2^{-m} S Φ(B_1A_2B_2^{-1})`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CanonicalF;

impl DecompositionMap for CanonicalF {
    fn f(&self, ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<TensorOperator> {
        f_map(ctx, l, lp)
    }

    fn f_inv(&self, ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<TensorOperator> {
        f_inv(ctx, l, lp)
    }
}

/// `(U ⊗ id)·F` for a fixed invertible `U` on the multiplicity space.
#[derive(Debug, Clone)]
pub struct TwistedF {
    u: TensorOperator,
    u_inv: TensorOperator,
}

impl TwistedF {
    pub fn new(u: TensorOperator) -> Result<Self> {
        let u_inv = u.inverse()?;
        Ok(Self { u, u_inv })
    }
}

impl DecompositionMap for TwistedF {
    fn f(&self, ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<TensorOperator> {
        embed(&self.u, &[1], 2)?.try_mul(&f_map(ctx, l, lp)?)
    }

    fn f_inv(&self, ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<TensorOperator> {
        f_inv(ctx, l, lp)?.try_mul(&embed(&self.u_inv, &[1], 2)?)
    }
}

/// The compositional `T` for an arbitrary choice of decomposition maps.
pub fn t_compositional_with<F: DecompositionMap + ?Sized>(
    ctx: &RootContext,
    fm: &F,
    l: &Weight,
    lp: &Weight,
    lpp: &Weight,
) -> Result<TensorOperator> {
    require_regular(&[*l, *lp, *lpp])?;
    let f13 = fm.f(ctx, l, &lp.mul(lpp))?;
    let f23 = fm.f(ctx, lp, lpp)?;
    let f12_inv = fm.f_inv(ctx, l, lp)?;
    let f23_inv = fm.f_inv(ctx, &l.mul(lp), lpp)?;
    let m = embedded_product(
        ctx.n(),
        3,
        &[(&f13, &[1, 3]), (&f23, &[2, 3]), (&f12_inv, &[1, 2]), (&f23_inv, &[2, 3])],
    )?;
    let (u, res) = factor_out(&m, &[1, 2])?;
    if res > ctx.threshold(m.dim()) {
        return Err(QtError::FactorizationFailure(res));
    }
    swap21(ctx, &u)
}

/// `T` obtained by factoring `F_{13} F_{23} F_{12}^{-1} F_{23}^{-1}` through the first two factors.
pub fn t_compositional(ctx: &RootContext, l: &Weight, lp: &Weight, lpp: &Weight) -> Result<TensorOperator> {
    t_compositional_with(ctx, &CanonicalF, l, lp, lpp)
}

/// `Φ(B_2 A_1 B_1^{-1})^{-1} S_{21}^{-1} B_1^{m_{x,x'}}`, with the fifth pentagon parameters.
pub fn t_closed_form(ctx: &RootContext, l: &Weight, lp: &Weight, lpp: &Weight) -> Result<TensorOperator> {
    let p5 = fifth_pair(ctx, l, lp, lpp)?;
    let m = ctx.cocycle_m(l.x, lp.x)?;
    let arg = swap21(ctx, &f_argument(ctx)?)?;
    let phi_inv = p5.phi_inv(ctx, &arg)?;
    let s21_inv = swap21(ctx, &s_inv(ctx))?;
    TensorOperator::product(&[&phi_inv, &s21_inv, &b_at(ctx, m, 1, 2)?])
}

/// `A(λ,λ')` from the defining equation of the Hom-level construction, solved
/// by least squares with a residual gate.
pub fn a_canonical(ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<TensorOperator> {
    require_regular(&[*l, *lp])?;
    let n = ctx.n();
    let ll = l.mul(lp);
    let ll_dual = ll.dual()?;
    require_regular(&[*lp, ll_dual])?;
    let fi = f_inv(ctx, l, lp)?;
    let fi2 = f_inv(ctx, lp, &ll_dual)?;
    let outer = kron(&[&d_map(ctx, &l.dual()?)?, &TensorOperator::identity(n, 1), &c_map(ctx, &ll)?])?;

    let n3 = n * n * n;
    let mut lmat = DMatrix::from_element(n3, n, C64::new(0.0, 0.0));
    let mut rmat = DMatrix::from_element(n3, n, C64::new(0.0, 0.0));
    for i in 0..n {
        for a in 0..n {
            for b in 0..n {
                for j in 0..n {
                    lmat[((a * n + b) * n + j, i)] = fi.get(a * n + b, i * n + j);
                    rmat[((j * n + a) * n + b, i)] = fi2.get(a * n + b, i * n + j);
                }
            }
        }
    }
    let lmat = outer.data() * lmat;
    let svd = rmat.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(QtError::SolveFailure(format!("rank-deficient system (σ_min/σ_max = {:e})", smin / smax)));
    }
    let sol = svd
        .solve(&lmat, 1e-12 * smax)
        .map_err(|e| QtError::SolveFailure(e.to_string()))?;
    let res = (&rmat * &sol - &lmat).norm() / lmat.norm();
    if !(res <= ctx.threshold(n3)) {
        return Err(QtError::SolveFailure(format!("least-squares residual {res:e}")));
    }
    let a = TensorOperator::new(n, 1, sol)?;
    if a.smallest_singular_value() < 1e-12 * a.frob_norm() {
        return Err(QtError::SolveFailure("solution is singular".into()));
    }
    Ok(a)
}

/// The integers `m₁ = m_{x,x'} − m_{yx'+y',(xx')^{-1}}` and `m₂ = m_{−yx^{-1},x}`.
pub fn a_integers(ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<(i64, i64)> {
    require_regular(&[*l, *lp])?;
    let ll = l.mul(lp);
    let m1 = ctx.cocycle_m(l.x, lp.x)? - ctx.cocycle_m(ll.y, ll.x.inv())?;
    let m2 = ctx.cocycle_m(-l.y / l.x, l.x)?;
    Ok((m1, m2))
}

/// `e_i ↦ Σ_j q^{-2ij - j² + (2m₁+1)j + 2(m₁-m₂)i} e_j`.
pub fn a_closed_form(ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<TensorOperator> {
    let (m1, m2) = a_integers(ctx, l, lp)?;
    Ok(TensorOperator::from_fn(ctx.n(), 1, |j, i| {
        let (i, j) = (i as i64, j as i64);
        ctx.q_pow(-2 * i * j - j * j + (2 * m1 + 1) * j + 2 * (m1 - m2) * i)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelationKind {
    PentagonT,
    Order3A,
    Ata,
    Tat,
    IntertwineF,
    DualIso,
    PhiFunctional,
    PhiConjugation,
    PhiPentagon,
    TProportional,
    AProportional,
    FNonuniqueness,
}

impl RelationKind {
    pub const ALL: [RelationKind; 12] = [
        RelationKind::PentagonT,
        RelationKind::Order3A,
        RelationKind::Ata,
        RelationKind::Tat,
        RelationKind::IntertwineF,
        RelationKind::DualIso,
        RelationKind::PhiFunctional,
        RelationKind::PhiConjugation,
        RelationKind::PhiPentagon,
        RelationKind::TProportional,
        RelationKind::AProportional,
        RelationKind::FNonuniqueness,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RelationKind::PentagonT => "pentagon_T",
            RelationKind::Order3A => "order3_A",
            RelationKind::Ata => "ata",
            RelationKind::Tat => "tat",
            RelationKind::IntertwineF => "intertwine_F",
            RelationKind::DualIso => "dual_iso",
            RelationKind::PhiFunctional => "phi_functional",
            RelationKind::PhiConjugation => "phi_conjugation",
            RelationKind::PhiPentagon => "phi_pentagon",
            RelationKind::TProportional => "t_proportional",
            RelationKind::AProportional => "a_proportional",
            RelationKind::FNonuniqueness => "f_nonuniqueness",
        }
    }

    /// Number of weights the relation consumes.
    pub fn weight_count(&self) -> usize {
        match self {
            RelationKind::DualIso => 1,
            RelationKind::Order3A
            | RelationKind::IntertwineF
            | RelationKind::PhiFunctional
            | RelationKind::PhiConjugation
            | RelationKind::AProportional => 2,
            RelationKind::Ata
            | RelationKind::Tat
            | RelationKind::PhiPentagon
            | RelationKind::TProportional
            | RelationKind::FNonuniqueness => 3,
            RelationKind::PentagonT => 4,
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationKind {
    type Err = QtError;

    fn from_str(s: &str) -> Result<Self> {
        RelationKind::ALL
            .iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| QtError::UnknownKind(s.to_string()))
    }
}

/// Collects several relative residuals into one report.
struct Residuals {
    worst: f64,
    dim: usize,
}

impl Residuals {
    fn new() -> Self {
        Self { worst: 0.0, dim: 1 }
    }

    /// Records `‖lhs − rhs‖ / ‖lhs‖`, normalised by the threshold for its size.
    fn push(&mut self, ctx: &RootContext, lhs: &TensorOperator, rhs: &TensorOperator) -> Result<()> {
        let r = lhs.rel_diff(rhs)?;
        self.push_value(ctx, r, lhs.dim());
        Ok(())
    }

    fn push_value(&mut self, ctx: &RootContext, r: f64, dim: usize) {
        let cur = self.worst / ctx.threshold(self.dim);
        let new = r / ctx.threshold(dim);
        if !(new <= cur) {
            self.worst = r;
            self.dim = dim;
        }
    }
}

fn take<const K: usize>(kind: RelationKind, w: &[Weight]) -> Result<[Weight; K]> {
    w.try_into().map_err(|_| {
        QtError::InvalidParams(format!("{kind} needs {} weights, got {}", kind.weight_count(), w.len()))
    })
}

/// Runs one relation check on the given weights.
pub fn verify_relation(ctx: &RootContext, kind: RelationKind, weights: &[Weight]) -> Result<RelationReport> {
    let used = weights.to_vec();
    let report = |res: f64, dim: usize, scalar: Option<C64>, expected: Option<C64>| {
        RelationReport::evaluate(kind.name(), ctx, dim, res, scalar, expected, used.clone())
    };
    let n = ctx.n();
    let one = Some(C64::new(1.0, 0.0));
    match kind {
        RelationKind::PentagonT => {
            let [l, lp, lpp, lppp] = take::<4>(kind, weights)?;
            require_regular(weights)?;
            let lhs = embedded_product(
                n,
                3,
                &[
                    (&t_compositional(ctx, &l, &lp, &lpp.mul(&lppp))?, &[2, 3]),
                    (&t_compositional(ctx, &l.mul(&lp), &lpp, &lppp)?, &[1, 2]),
                ],
            )?;
            let rhs = embedded_product(
                n,
                3,
                &[
                    (&t_compositional(ctx, &lp, &lpp, &lppp)?, &[1, 2]),
                    (&t_compositional(ctx, &l, &lp.mul(&lpp), &lppp)?, &[1, 3]),
                    (&t_compositional(ctx, &l, &lp, &lpp)?, &[2, 3]),
                ],
            )?;
            let (s, res) = proportionality(&lhs, &rhs)?;
            Ok(report(res, lhs.dim(), Some(s), one))
        }
        RelationKind::Order3A => {
            let [l, lp] = take::<2>(kind, weights)?;
            let (comp, expected) = order3_composite(ctx, &l, &lp)?;
            let (s, res) = proportionality(&comp, &TensorOperator::identity(n, 1))?;
            Ok(report(res, n, Some(s), Some(expected)))
        }
        RelationKind::Ata => {
            let [l1, l2, l3] = take::<3>(kind, weights)?;
            let (lhs, rhs, expected) = ata_sides(ctx, &l1, &l2, &l3)?;
            let (s, res) = proportionality(&lhs, &rhs)?;
            Ok(report(res, lhs.dim(), Some(s), Some(expected)))
        }
        RelationKind::Tat => {
            let [l1, l2, l3] = take::<3>(kind, weights)?;
            let (lhs, rhs) = tat_sides(ctx, &l1, &l2, &l3)?;
            let (s, res) = proportionality(&lhs, &rhs)?;
            Ok(report(res, lhs.dim(), Some(s), one))
        }
        RelationKind::IntertwineF => {
            let [l, lp] = take::<2>(kind, weights)?;
            let r = f_residuals(ctx, &l, &lp)?;
            Ok(report(r.worst, r.dim, None, None))
        }
        RelationKind::DualIso => {
            let [l] = take::<1>(kind, weights)?;
            let r = dual_iso_residuals(ctx, &l)?;
            Ok(report(r.worst, r.dim, None, None))
        }
        RelationKind::PhiFunctional => {
            let [l, lp] = take::<2>(kind, weights)?;
            let p = DilogParams::from_pair(ctx, &l, &lp)?;
            let c = f_argument(ctx)?;
            let lhs = p.phi(ctx, &c.scale(ctx.q_pow(-2)))?.try_mul(&p.phi_inv(ctx, &c)?)?;
            let rhs = TensorOperator::identity(n, 2).scale(p.c).try_sub(&c.scale(p.a))?;
            let res = lhs.rel_diff(&rhs)?;
            Ok(report(res, lhs.dim(), None, None))
        }
        RelationKind::PhiConjugation => {
            let [l, lp] = take::<2>(kind, weights)?;
            let r = phi_conjugation_residuals(ctx, &l, &lp)?;
            Ok(report(r.worst, r.dim, None, None))
        }
        RelationKind::PhiPentagon => {
            let [l, lp, lpp] = take::<3>(kind, weights)?;
            let pp = pentagon_params(ctx, &l, &lp, &lpp)?;
            let (c, d) = pentagon_operators(ctx)?;
            let mut rep = pentagon_check(ctx, &pp, &c, &d, used.clone())?;
            let prim = pentagon_check(ctx, &pp, &gen_a(ctx), &gen_b(ctx), used.clone())?;
            rep.passed &= prim.passed;
            rep.residual = rep.residual.max(prim.residual * ctx.threshold(rep.dim) / ctx.threshold(prim.dim));
            Ok(rep)
        }
        RelationKind::TProportional => {
            let [l, lp, lpp] = take::<3>(kind, weights)?;
            let t = t_compositional(ctx, &l, &lp, &lpp)?;
            let tc = t_closed_form(ctx, &l, &lp, &lpp)?;
            let (s, res) = proportionality(&t, &tc)?;
            Ok(report(res, t.dim(), Some(s), None))
        }
        RelationKind::AProportional => {
            let [l, lp] = take::<2>(kind, weights)?;
            let a = a_canonical(ctx, &l, &lp)?;
            let ac = a_closed_form(ctx, &l, &lp)?;
            let (s, res) = proportionality(&a, &ac)?;
            let mut r = a_conjugation_residuals(ctx, &l, &lp, &a)?;
            r.push_value(ctx, res, n);
            let r2 = a_conjugation_residuals(ctx, &l, &lp, &ac)?;
            r.push_value(ctx, r2.worst, r2.dim);
            Ok(report(r.worst, r.dim, Some(s), None))
        }
        RelationKind::FNonuniqueness => {
            let [l, lp, lpp] = take::<3>(kind, weights)?;
            let mut rng = ChaCha8Rng::seed_from_u64(weight_seed(weights));
            let u = random_operator(&mut rng, n, 1);
            let res = f_nonuniqueness_residual(ctx, &u, &l, &lp, &lpp)?;
            Ok(report(res, n * n, None, None))
        }
    }
}

fn weight_seed(ws: &[Weight]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for w in ws {
        for v in [w.x.re, w.x.im, w.y.re, w.y.im] {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// `C = B_1A_2B_2^{-1}`, `D = B_2A_3B_3^{-1}` on three factors.
pub fn pentagon_operators(ctx: &RootContext) -> Result<(TensorOperator, TensorOperator)> {
    let arg = f_argument(ctx)?;
    Ok((embed(&arg, &[1, 2], 3)?, embed(&arg, &[2, 3], 3)?))
}

/// `A((λλ')*,λ)·A(λ',(λλ')*)·A(λ,λ')` and the predicted scalar `q^{-2m_{x,x'}}`.
pub fn order3_composite(ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<(TensorOperator, C64)> {
    let lld = l.mul(lp).dual()?;
    let comp = TensorOperator::product(&[
        &a_canonical(ctx, &lld, l)?,
        &a_canonical(ctx, lp, &lld)?,
        &a_canonical(ctx, l, lp)?,
    ])?;
    Ok((comp, ctx.q_pow(-2 * ctx.cocycle_m(l.x, lp.x)?)))
}

/// Both sides of the `ATA` relation, without the scalar, and the predicted
/// scalar `q^{2(m_{x₁,x₂} − m_{x₁,x₂x₃})}`.
pub fn ata_sides(
    ctx: &RootContext,
    l1: &Weight,
    l2: &Weight,
    l3: &Weight,
) -> Result<(TensorOperator, TensorOperator, C64)> {
    require_regular(&[*l1, *l2, *l3])?;
    let n = ctx.n();
    let l4 = l1.mul(l2);
    let l0 = l4.mul(l3);
    let l0d = l0.dual()?;
    let t = t_compositional(ctx, l3, &l0d, l1)?;
    let lhs = embedded_product(
        n,
        2,
        &[
            (&swap21(ctx, &t)?, &[1, 2]),
            (&a_canonical(ctx, &l4.dual()?, l1)?.inverse()?, &[2]),
            (&a_canonical(ctx, &l4, l3)?, &[1]),
        ],
    )?;
    let rhs = embedded_product(
        n,
        2,
        &[
            (&a_canonical(ctx, &l0d, l1)?.inverse()?, &[2]),
            (&a_canonical(ctx, l2, l3)?, &[1]),
            (&t_compositional(ctx, l1, l2, l3)?, &[1, 2]),
        ],
    )?;
    let m = ctx.cocycle_m(l1.x, l2.x)? - ctx.cocycle_m(l1.x, l2.x * l3.x)?;
    Ok((lhs, rhs, ctx.q_pow(2 * m)))
}

/// Both sides of the `TAT = AAP` relation.
pub fn tat_sides(
    ctx: &RootContext,
    l1: &Weight,
    l2: &Weight,
    l3: &Weight,
) -> Result<(TensorOperator, TensorOperator)> {
    require_regular(&[*l1, *l2, *l3])?;
    let n = ctx.n();
    let l4 = l1.mul(l2);
    let l5 = l2.mul(l3);
    let l0d = l4.mul(l3).dual()?;
    let lhs = embedded_product(
        n,
        2,
        &[
            (&t_compositional(ctx, l2, l3, &l0d)?, &[1, 2]),
            (&a_canonical(ctx, l1, &l5)?, &[1]),
            (&swap21(ctx, &t_compositional(ctx, l1, l2, l3)?)?, &[1, 2]),
        ],
    )?;
    let rhs = TensorOperator::product(&[
        &embed(&a_canonical(ctx, &l4, l3)?, &[1], 2)?,
        &embed(&a_canonical(ctx, l1, l2)?, &[2], 2)?,
        &perm_op(n, &[2, 1])?,
    ])?;
    Ok((lhs, rhs))
}

fn f_residuals(ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<Residuals> {
    let n = ctx.n();
    let mut r = Residuals::new();
    let f = f_map(ctx, l, lp)?;
    let fi = f_inv(ctx, l, lp)?;
    let id = TensorOperator::identity(n, 2);
    r.push(ctx, &id, &fi.try_mul(&f)?)?;
    r.push(ctx, &id, &f.try_mul(&fi)?)?;
    let (r1, r2) = (rep_mu(ctx, l)?, rep_mu(ctx, lp)?);
    let r12 = rep_mu(ctx, &l.mul(lp))?;
    for g in [Gen::X, Gen::Y] {
        let lhs = f.try_mul(&tensor_action(&[&r1, &r2], g)?)?;
        let rhs = embed(r12.gen(g), &[2], 2)?.try_mul(&f)?;
        r.push(ctx, &lhs, &rhs)?;
    }
    let p = DilogParams::from_pair(ctx, l, lp)?;
    let q2m = ctx.q_pow(2 * ctx.cocycle_m(l.x, lp.x)?);
    let op = |p: &[(i64, i64)]| -> Result<TensorOperator> {
        // product of A_k^{e_a} B_k^{e_b} for k = 1, 2
        let mut acc = TensorOperator::identity(n, 2);
        for (k, &(ea, eb)) in p.iter().enumerate() {
            acc = TensorOperator::product(&[&acc, &a_at(ctx, ea, k + 1, 2)?, &b_at(ctx, eb, k + 1, 2)?])?;
        }
        Ok(acc)
    };
    let conj = |x: &TensorOperator| TensorOperator::product(&[&f, x, &fi]);
    // F A1B2 F^{-1} = A1B2
    let a1b2 = op(&[(1, 0), (0, 1)])?;
    r.push(ctx, &conj(&a1b2)?, &a1b2)?;
    // F B1 F^{-1} = B1B2
    r.push(ctx, &conj(&op(&[(0, 1), (0, 0)])?)?, &op(&[(0, 1), (0, 1)])?)?;
    // F A1 F^{-1} = c A1 − a q^{2m} B1A2
    let b1a2 = b_at(ctx, 1, 1, 2)?.try_mul(&a_at(ctx, 1, 2, 2)?)?;
    let rhs = op(&[(1, 0), (0, 0)])?.scale(p.c).try_sub(&b1a2.scale(p.a * q2m))?;
    r.push(ctx, &conj(&op(&[(1, 0), (0, 0)])?)?, &rhs)?;
    // F A1B1^{-1} F^{-1} = c A1B1^{-1}B2^{-1} − a q^{2m} A2B2^{-1}
    let rhs = op(&[(1, -1), (0, -1)])?
        .scale(p.c)
        .try_sub(&op(&[(0, 0), (1, -1)])?.scale(p.a * q2m))?;
    r.push(ctx, &conj(&op(&[(1, -1), (0, 0)])?)?, &rhs)?;
    Ok(r)
}

fn dual_iso_residuals(ctx: &RootContext, l: &Weight) -> Result<Residuals> {
    let n = ctx.n();
    let mut r = Residuals::new();
    let ld = l.dual()?;
    let (c, d) = (c_map(ctx, l)?, d_map(ctx, l)?);
    let (cinv, dinv) = (c.inverse()?, d.inverse()?);
    r.push(ctx, &d.try_mul(&c)?, &gen_a(ctx))?;
    r.push(ctx, &c.try_mul(&d)?, &gen_a(ctx).inverse()?)?;
    let mu_dual = rep_mu(ctx, &ld)?;
    let left = rep_dual_left(ctx, l)?;
    let right = rep_dual_right(ctx, l)?;
    for g in [Gen::X, Gen::Y] {
        r.push(ctx, &cinv.try_mul(mu_dual.gen(g))?, &left.gen(g).try_mul(&cinv)?)?;
        r.push(ctx, &dinv.try_mul(right.gen(g))?, &mu_dual.gen(g).try_mul(&dinv)?)?;
    }
    // ev·(C_λ⊗D_{λ*}) = ev, ev·(D_λ^{-1}⊗D_{λ*}) = ev·A_2^{-1}, ev·(C_{λ*}^{-1}⊗C_λ) = ev·A_2
    let ev = DMatrix::from_fn(1, n * n, |_, k| {
        if k / n == k % n {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let cases = [
        (kron(&[&c, &d_map(ctx, &ld)?])?, TensorOperator::identity(n, 2)),
        (kron(&[&dinv, &d_map(ctx, &ld)?])?, a_at(ctx, -1, 2, 2)?),
        (kron(&[&c_map(ctx, &ld)?.inverse()?, &c])?, a_at(ctx, 1, 2, 2)?),
    ];
    for (lhs, rhs) in cases {
        let u = &ev * lhs.data();
        let v = &ev * rhs.data();
        r.push_value(ctx, (&u - &v).norm() / v.norm(), n);
    }
    Ok(r)
}

fn phi_conjugation_residuals(ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<Residuals> {
    let n = ctx.n();
    let mut r = Residuals::new();
    let p = DilogParams::from_pair(ctx, l, lp)?;
    let (a, b) = (gen_a(ctx), gen_b(ctx));
    // D Φ(C) = Φ(C)(cD − aCD) for CD = q²DC, with C = A, D = B
    let lhs = b.try_mul(&p.phi(ctx, &a)?)?;
    let rhs = p.phi(ctx, &a)?.try_mul(&b.scale(p.c).try_sub(&a.try_mul(&b)?.scale(p.a))?)?;
    r.push(ctx, &lhs, &rhs)?;
    // D Φ(C)^{-1} = Φ(C)^{-1}(cD − aDC) for CD = q^{-2}DC, with C = B, D = A
    let lhs = a.try_mul(&p.phi_inv(ctx, &b)?)?;
    let rhs = p
        .phi_inv(ctx, &b)?
        .try_mul(&a.scale(p.c).try_sub(&a.try_mul(&b)?.scale(p.a))?)?;
    r.push(ctx, &lhs, &rhs)?;
    // D Φ(C) D^{-1} = Φ(D C D^{-1})
    let c = f_argument(ctx)?;
    let d = f_map(ctx, l, lp)?;
    let dinv = f_inv(ctx, l, lp)?;
    let lhs = TensorOperator::product(&[&d, &p.phi(ctx, &c)?, &dinv])?;
    let rhs = p.phi(ctx, &TensorOperator::product(&[&d, &c, &dinv])?)?;
    r.push(ctx, &lhs, &rhs)?;
    let _ = n;
    Ok(r)
}

/// Residuals of the two conjugation actions `A·A·A^{-1} = q^{2m₁} B A^{-1}`
/// and `A·B·A^{-1} = q^{2(m₁−m₂)} A^{-1}` for a candidate operator `op`.
pub fn a_conjugation_residuals_for(
    ctx: &RootContext,
    l: &Weight,
    lp: &Weight,
    op: &TensorOperator,
) -> Result<(f64, f64)> {
    let (m1, m2) = a_integers(ctx, l, lp)?;
    let (a, b) = (gen_a(ctx), gen_b(ctx));
    let ainv = a.inverse()?;
    let opinv = op.inverse()?;
    let lhs = TensorOperator::product(&[op, &a, &opinv])?;
    let rhs = b.try_mul(&ainv)?.scale(ctx.q_pow(2 * m1));
    let r1 = lhs.rel_diff(&rhs)?;
    let lhs = TensorOperator::product(&[op, &b, &opinv])?;
    let rhs = ainv.scale(ctx.q_pow(2 * (m1 - m2)));
    let r2 = lhs.rel_diff(&rhs)?;
    Ok((r1, r2))
}

fn a_conjugation_residuals(ctx: &RootContext, l: &Weight, lp: &Weight, op: &TensorOperator) -> Result<Residuals> {
    let (r1, r2) = a_conjugation_residuals_for(ctx, l, lp, op)?;
    let mut r = Residuals::new();
    r.push_value(ctx, r1, ctx.n());
    r.push_value(ctx, r2, ctx.n());
    Ok(r)
}

/// `‖T~ − (U⊗U) T (U⊗U)^{-1}‖ / ‖T~‖` where `T~` is built from `(U⊗id)F`.
pub fn f_nonuniqueness_residual(
    ctx: &RootContext,
    u: &TensorOperator,
    l: &Weight,
    lp: &Weight,
    lpp: &Weight,
) -> Result<f64> {
    let t = t_compositional(ctx, l, lp, lpp)?;
    let tw = t_compositional_with(ctx, &TwistedF::new(u.clone())?, l, lp, lpp)?;
    let uu = kron(&[u, u])?;
    let expect = TensorOperator::product(&[&uu, &t, &uu.inverse()?])?;
    tw.rel_diff(&expect)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(x: f64, y: f64) -> Weight {
        Weight::real(x, y).unwrap()
    }

    struct ScaledF(fn(&Weight, &Weight) -> C64);

    impl DecompositionMap for ScaledF {
        fn f(&self, ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<TensorOperator> {
            Ok(f_map(ctx, l, lp)?.scale((self.0)(l, lp)))
        }

        fn f_inv(&self, ctx: &RootContext, l: &Weight, lp: &Weight) -> Result<TensorOperator> {
            Ok(f_inv(ctx, l, lp)?.scale((self.0)(l, lp).inv()))
        }
    }

    #[test]
    fn integer_examples() {
        for n in [3, 5] {
            let ctx = RootContext::new(n).unwrap();
            let (l, lp, lpp) = (w(2.0, 1.0), w(3.0, 1.0), w(5.0, 1.0));
            let t = t_compositional(&ctx, &l, &lp, &lpp).unwrap();
            assert!(t.condition_number().is_finite());
            let tc = t_closed_form(&ctx, &l, &lp, &lpp).unwrap();
            let (_, res) = proportionality(&t, &tc).unwrap();
            assert!(res < 1e-10, "{res}");
            let rep = verify_relation(&ctx, RelationKind::Order3A, &[l, lp]).unwrap();
            assert!(rep.passed, "{rep:?}");
            let rep = verify_relation(&ctx, RelationKind::PentagonT, &[l, lp, lpp, w(7.0, 1.0)]).unwrap();
            assert!(rep.passed, "{rep:?}");
        }
    }

    #[test]
    fn a_closed_form_entries() {
        let ctx = RootContext::new(5).unwrap();
        let (l, lp) = (w(2.0, 1.0), w(3.0, 1.0));
        let a = a_closed_form(&ctx, &l, &lp).unwrap();
        let (m1, _) = a_integers(&ctx, &l, &lp).unwrap();
        for j in 0..5i64 {
            assert!((a.get(j as usize, 0) - ctx.q_pow(-j * j + (2 * m1 + 1) * j)).norm() < 1e-14);
            for i in 0..5 {
                assert!((a.get(j as usize, i).norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zeta_scaling() {
        let ctx = RootContext::new(3).unwrap();
        fn zeta(l: &Weight, lp: &Weight) -> C64 {
            C64::new(1.0 + l.x.re * 0.1, lp.y.re - 0.3)
        }
        let (l, lp, lpp) = (w(2.0, 1.0), w(3.0, 1.0), w(5.0, 1.0));
        let t = t_compositional(&ctx, &l, &lp, &lpp).unwrap();
        let ts = t_compositional_with(&ctx, &ScaledF(zeta), &l, &lp, &lpp).unwrap();
        let expect = zeta(&l, &lp.mul(&lpp)) * zeta(&lp, &lpp) / (zeta(&l, &lp) * zeta(&l.mul(&lp), &lpp));
        let (s, res) = proportionality(&ts, &t).unwrap();
        assert!(res < 1e-12);
        assert!((s - expect).norm() < 1e-10);
    }

    #[test]
    fn kinds_parse() {
        for k in RelationKind::ALL {
            assert_eq!(k.name().parse::<RelationKind>().unwrap(), k);
        }
        assert!("nope".parse::<RelationKind>().is_err());
    }

    #[test]
    fn wrong_weight_count() {
        let ctx = RootContext::new(3).unwrap();
        assert!(verify_relation(&ctx, RelationKind::Tat, &[w(2.0, 1.0)]).is_err());
    }

    #[test]
    fn singular_subproduct_named() {
        let ctx = RootContext::new(3).unwrap();
        let err = verify_relation(&ctx, RelationKind::Tat, &[w(1.0, 1.0), w(1.0, -1.0), w(2.0, 1.0)]).unwrap_err();
        match err {
            QtError::RegularityViolation(msg) => assert!(msg.contains("1..=2"), "{msg}"),
            e => panic!("{e:?}"),
        }
    }
}
