//! Dense operators on `(C^N)^{⊗k}`.
//!
//! The basis vector `e_{i_1} ⊗ … ⊗ e_{i_k}` has index `Σ_r i_r N^{k-r}`, so the
//! first tensor factor is the most significant digit. Factor positions in the
//! public API are 1-based, matching the notation `A_1 = A ⊗ id`, `F_{13}`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde_json::{json, Value};

use crate::cyclotomic::{RootContext, C64};
use crate::error::{QtError, Result};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// A square complex matrix acting on `k` tensor factors of dimension `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorOperator {
    n: usize,
    arity: usize,
    data: DMatrix<C64>,
}

fn ipow(n: usize, k: usize) -> usize {
    n.pow(k as u32)
}

/// Offsets of all basis indices supported on `positions` (0-based), in the
/// order of the sub-index with the first listed position most significant.
fn offsets(n: usize, k: usize, positions: &[usize]) -> Vec<usize> {
    let m = positions.len();
    let mut out = Vec::with_capacity(ipow(n, m));
    for a in 0..ipow(n, m) {
        let mut rem = a;
        let mut off = 0;
        for r in (0..m).rev() {
            let d = rem % n;
            rem /= n;
            off += d * ipow(n, k - 1 - positions[r]);
        }
        out.push(off);
    }
    out
}

fn check_positions(positions: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut seen = vec![false; k];
    let mut zero_based = Vec::with_capacity(positions.len());
    for &p in positions {
        if p == 0 || p > k || seen[p - 1] {
            return Err(QtError::BadPositions(format!("{positions:?} in arity {k}")));
        }
        seen[p - 1] = true;
        zero_based.push(p - 1);
    }
    Ok(zero_based)
}

fn complement(positions: &[usize], k: usize) -> Vec<usize> {
    (0..k).filter(|p| !positions.contains(p)).collect()
}

/// `A·B`, skipping zero entries when `A` is sparse.
fn matmul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    let nnz = a.iter().filter(|v| **v != ZERO).count();
    if nnz * 4 > a.nrows() * a.ncols() {
        return a * b;
    }
    let mut cols: Vec<Vec<(usize, C64)>> = vec![Vec::new(); a.ncols()];
    for k in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, k)];
            if v != ZERO {
                cols[k].push((i, v));
            }
        }
    }
    let mut out = DMatrix::from_element(a.nrows(), b.ncols(), ZERO);
    for j in 0..b.ncols() {
        for (k, col) in cols.iter().enumerate() {
            let bkj = b[(k, j)];
            if bkj == ZERO {
                continue;
            }
            for &(i, aik) in col {
                out[(i, j)] += aik * bkj;
            }
        }
    }
    out
}

impl TensorOperator {
    pub fn new(n: usize, arity: usize, data: DMatrix<C64>) -> Result<Self> {
        let d = ipow(n, arity);
        if data.nrows() != d || data.ncols() != d {
            return Err(QtError::DimensionMismatch(format!(
                "expected {d}x{d}, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(Self { n, arity, data })
    }

    pub fn identity(n: usize, arity: usize) -> Self {
        let d = ipow(n, arity);
        Self {
            n,
            arity,
            data: DMatrix::identity(d, d),
        }
    }

    pub fn zeros(n: usize, arity: usize) -> Self {
        let d = ipow(n, arity);
        Self {
            n,
            arity,
            data: DMatrix::from_element(d, d, ZERO),
        }
    }

    pub fn from_fn(n: usize, arity: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        let d = ipow(n, arity);
        Self {
            n,
            arity,
            data: DMatrix::from_fn(d, d, f),
        }
    }

    /// Operator sending each `e_col` to `c·e_row` for `(row, c) = f(col)`.
    pub fn monomial(n: usize, arity: usize, mut f: impl FnMut(usize) -> (usize, C64)) -> Self {
        let mut op = Self::zeros(n, arity);
        for col in 0..op.dim() {
            let (row, c) = f(col);
            op.data[(row, col)] = c;
        }
        op
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Side length `N^arity`.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<C64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[(row, col)]
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.arity != other.arity {
            return Err(QtError::DimensionMismatch(format!(
                "(N={}, k={}) vs (N={}, k={})",
                self.n, self.arity, other.n, other.arity
            )));
        }
        Ok(())
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self {
            n: self.n,
            arity: self.arity,
            data: matmul(&self.data, &other.data),
        })
    }

    /// Product of a non-empty list, left to right.
    pub fn product(ops: &[&TensorOperator]) -> Result<Self> {
        let (first, rest) = ops
            .split_first()
            .ok_or_else(|| QtError::DimensionMismatch("empty product".into()))?;
        let mut acc = (*first).clone();
        for op in rest {
            acc = acc.try_mul(op)?;
        }
        Ok(acc)
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            n: self.n,
            arity: self.arity,
            data: &self.data * c,
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self {
            n: self.n,
            arity: self.arity,
            data: &self.data + &other.data,
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self {
            n: self.n,
            arity: self.arity,
            data: &self.data - &other.data,
        })
    }

    pub fn adjoint(&self) -> Self {
        Self {
            n: self.n,
            arity: self.arity,
            data: self.data.adjoint(),
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .data
            .clone()
            .lu()
            .try_inverse()
            .ok_or(QtError::SingularMatrix)?;
        if inv.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(QtError::SingularMatrix);
        }
        Ok(Self {
            n: self.n,
            arity: self.arity,
            data: inv,
        })
    }

    /// Integer power; negative exponents invert first.
    pub fn pow(&self, k: i64) -> Result<Self> {
        let base = if k < 0 { self.inverse()? } else { self.clone() };
        let mut acc = Self::identity(self.n, self.arity);
        for _ in 0..k.unsigned_abs() {
            acc = acc.try_mul(&base)?;
        }
        Ok(acc)
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.norm()
    }

    /// `‖self − other‖_F / ‖self‖_F` (absolute when `self` is zero).
    pub fn rel_diff(&self, other: &Self) -> Result<f64> {
        self.same_shape(other)?;
        let num = (&self.data - &other.data).norm();
        let den = self.data.norm();
        Ok(if den > 0.0 { num / den } else { num })
    }

    /// Condition number in the 2-norm.
    pub fn condition_number(&self) -> f64 {
        let sv = self.data.clone().singular_values();
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }

    pub fn smallest_singular_value(&self) -> f64 {
        self.data
            .clone()
            .singular_values()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.data * v
    }

    /// `{"arity":k,"N":N,"data":[[re,im],…]}`, row-major.
    pub fn to_json(&self) -> Value {
        let d = self.dim();
        let mut data = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                let v = self.data[(r, c)];
                data.push(json!([v.re, v.im]));
            }
        }
        json!({"arity": self.arity, "N": self.n, "data": data})
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let bad = |m: &str| QtError::DimensionMismatch(format!("matrix JSON: {m}"));
        let arity = v["arity"].as_u64().ok_or_else(|| bad("arity"))? as usize;
        let n = v["N"].as_u64().ok_or_else(|| bad("N"))? as usize;
        let arr = v["data"].as_array().ok_or_else(|| bad("data"))?;
        let d = ipow(n, arity);
        if arr.len() != d * d {
            return Err(bad("data length"));
        }
        let mut m = DMatrix::from_element(d, d, ZERO);
        for (idx, e) in arr.iter().enumerate() {
            let re = e[0].as_f64().ok_or_else(|| bad("entry"))?;
            let im = e[1].as_f64().ok_or_else(|| bad("entry"))?;
            m[(idx / d, idx % d)] = C64::new(re, im);
        }
        Self::new(n, arity, m)
    }
}

/// Kronecker product; the first operator acts on the most significant factors.
pub fn kron(ops: &[&TensorOperator]) -> Result<TensorOperator> {
    let (first, rest) = ops
        .split_first()
        .ok_or_else(|| QtError::DimensionMismatch("empty kron".into()))?;
    let mut acc = (*first).clone();
    for op in rest {
        if op.n != acc.n {
            return Err(QtError::DimensionMismatch(format!("N={} vs N={}", acc.n, op.n)));
        }
        acc = TensorOperator {
            n: acc.n,
            arity: acc.arity + op.arity,
            data: acc.data.kronecker(&op.data),
        };
    }
    Ok(acc)
}

/// `embed(M, positions, k)·X` without forming the embedded matrix.
///
/// `x` may have any number of columns; its rows index `(C^N)^{⊗k}`.
pub fn apply_embedded(
    m: &TensorOperator,
    positions: &[usize],
    k: usize,
    x: &DMatrix<C64>,
) -> Result<DMatrix<C64>> {
    if m.arity != positions.len() {
        return Err(QtError::BadPositions(format!(
            "operator of arity {} on positions {positions:?}",
            m.arity
        )));
    }
    let pos = check_positions(positions, k)?;
    let n = m.n;
    if x.nrows() != ipow(n, k) {
        return Err(QtError::DimensionMismatch(format!(
            "vector space of dimension {} for arity {k}",
            x.nrows()
        )));
    }
    let kept = offsets(n, k, &pos);
    let rest = offsets(n, k, &complement(&pos, k));
    let sub = kept.len();
    let mut entries: Vec<(usize, usize, C64)> = Vec::new();
    for c in 0..sub {
        for r in 0..sub {
            let v = m.data[(r, c)];
            if v != ZERO {
                entries.push((r, c, v));
            }
        }
    }
    let mut out = DMatrix::from_element(x.nrows(), x.ncols(), ZERO);
    let mut buf = vec![ZERO; sub];
    for col in 0..x.ncols() {
        let xc = x.column(col);
        for &b in &rest {
            buf.iter_mut().for_each(|v| *v = ZERO);
            for &(r, c, v) in &entries {
                buf[r] += v * xc[kept[c] + b];
            }
            for (a, v) in buf.iter().enumerate() {
                out[(kept[a] + b, col)] = *v;
            }
        }
    }
    Ok(out)
}

/// The operator acting as `m` on the listed factors and as the identity elsewhere.
pub fn embed(m: &TensorOperator, positions: &[usize], k: usize) -> Result<TensorOperator> {
    let id = DMatrix::identity(ipow(m.n, k), ipow(m.n, k));
    let data = apply_embedded(m, positions, k, &id)?;
    TensorOperator::new(m.n, k, data)
}

/// Product `ops[0]·ops[1]⋯` of embedded operators on `k` factors.
pub fn embedded_product(
    n: usize,
    k: usize,
    ops: &[(&TensorOperator, &[usize])],
) -> Result<TensorOperator> {
    let d = ipow(n, k);
    let mut acc = DMatrix::identity(d, d);
    for (op, pos) in ops.iter().rev() {
        acc = apply_embedded(op, pos, k, &acc)?;
    }
    TensorOperator::new(n, k, acc)
}

/// The permutation operator `P_γ`, sending the `i`-th factor to the `γ(i)`-th.
///
/// `gamma[i-1] = γ(i)`, 1-based.
pub fn perm_op(n: usize, gamma: &[usize]) -> Result<TensorOperator> {
    let k = gamma.len();
    check_positions(gamma, k)?;
    let d = ipow(n, k);
    let mut digits = vec![0usize; k];
    let mut out = vec![0usize; k];
    Ok(TensorOperator::monomial(n, k, |col| {
        let mut rem = col;
        for r in (0..k).rev() {
            digits[r] = rem % n;
            rem /= n;
        }
        for r in 0..k {
            out[gamma[r] - 1] = digits[r];
        }
        let row = out.iter().fold(0, |acc, &dg| acc * n + dg);
        debug_assert!(row < d);
        (row, ONE)
    }))
}

/// Restrict `m` to the kept factors by slicing at index 0 of every dropped
/// factor; also returns `‖m − embed(U)‖_F / ‖m‖_F`.
pub fn factor_out(m: &TensorOperator, kept: &[usize]) -> Result<(TensorOperator, f64)> {
    let k = m.arity;
    let pos = check_positions(kept, k)?;
    let offs = offsets(m.n, k, &pos);
    let u = TensorOperator::from_fn(m.n, kept.len(), |r, c| m.data[(offs[r], offs[c])]);
    let back = embed(&u, kept, k)?;
    let res = m.rel_diff(&back)?;
    Ok((u, res))
}

/// Best `c` with `m ≈ c·v` in the Frobenius sense, and `‖m − c v‖_F / ‖m‖_F`.
pub fn proportionality(m: &TensorOperator, v: &TensorOperator) -> Result<(C64, f64)> {
    m.same_shape(v)?;
    let vv: f64 = v.data.iter().map(|z| z.norm_sqr()).sum();
    if vv == 0.0 {
        return Err(QtError::ZeroReference);
    }
    let vm: C64 = v.data.iter().zip(m.data.iter()).map(|(a, b)| a.conj() * b).sum();
    let c = vm / vv;
    let res = m.rel_diff(&v.scale(c))?;
    Ok((c, res))
}

/// Dimension of `{U : U·a_i = b_i·U for all i}` on a space of side `d`.
pub fn intertwiner_dim(d: usize, pairs: &[(&TensorOperator, &TensorOperator)], tol: f64) -> Result<usize> {
    const MAX_SIDE: usize = 15 * 15;
    if d > MAX_SIDE {
        return Err(QtError::TooLarge(d));
    }
    if pairs.is_empty() {
        return Ok(d * d);
    }
    let dd = d * d;
    let mut sys = DMatrix::from_element(pairs.len() * dd, dd, ZERO);
    let id = DMatrix::<C64>::identity(d, d);
    for (p, (a, b)) in pairs.iter().enumerate() {
        if a.dim() != d || b.dim() != d {
            return Err(QtError::DimensionMismatch("intertwiner system".into()));
        }
        // column-major vec: vec(U A) = (A^T ⊗ I) vec U, vec(B U) = (I ⊗ B) vec U
        let block = a.data.transpose().kronecker(&id) - id.kronecker(&b.data);
        sys.view_mut((p * dd, 0), (dd, dd)).copy_from(&block);
    }
    let sv = sys.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > tol * smax).count();
    Ok(dd - rank)
}

/// Dimension of the commutant of a set of operators.
pub fn commutant_dim(d: usize, gens: &[&TensorOperator], tol: f64) -> Result<usize> {
    let pairs: Vec<_> = gens.iter().map(|g| (*g, *g)).collect();
    intertwiner_dim(d, &pairs, tol)
}

/// Contract factors `i` and `j` (1-based) with `⟨e_a, e_b⟩ = δ_{ab}`.
pub fn ev_contract(v: &DVector<C64>, n: usize, k: usize, i: usize, j: usize) -> Result<DVector<C64>> {
    if i == j {
        return Err(QtError::BadPositions(format!("ev on ({i}, {j})")));
    }
    let pos = check_positions(&[i, j], k)?;
    if v.len() != ipow(n, k) {
        return Err(QtError::DimensionMismatch("ev_contract".into()));
    }
    let rest = complement(&pos, k);
    let rest_offs = offsets(n, k, &rest);
    let pair_offs = offsets(n, k, &pos);
    let mut out = DVector::from_element(rest_offs.len(), ZERO);
    for (r, &ro) in rest_offs.iter().enumerate() {
        for a in 0..n {
            out[r] += v[ro + pair_offs[a * n + a]];
        }
    }
    Ok(out)
}

/// Powers `C^0, …, C^{N-1}` of an `N`-torsion operator.
#[derive(Debug, Clone)]
pub struct TorsionPowers {
    powers: Vec<TensorOperator>,
}

impl TorsionPowers {
    pub fn new(ctx: &RootContext, c: &TensorOperator) -> Result<Self> {
        let n = ctx.n();
        let mut powers = Vec::with_capacity(n);
        powers.push(TensorOperator::identity(c.n, c.arity));
        for k in 1..n {
            let next = powers[k - 1].try_mul(c)?;
            powers.push(next);
        }
        let cn = powers[n - 1].try_mul(c)?;
        let id = TensorOperator::identity(c.n, c.arity);
        let res = id.rel_diff(&cn)?;
        if res > ctx.threshold(c.dim()) {
            return Err(QtError::NotTorsion(res));
        }
        Ok(Self { powers })
    }

    /// `Σ_i values[i]·P_i`, where `P_i` projects onto the `q^{2i}`-eigenspace.
    pub fn functional(&self, ctx: &RootContext, values: &[C64]) -> TensorOperator {
        let n = ctx.n();
        assert_eq!(values.len(), n);
        let mut out = TensorOperator::zeros(self.powers[0].n, self.powers[0].arity);
        for (k, pk) in self.powers.iter().enumerate() {
            let coef: C64 = values
                .iter()
                .enumerate()
                .map(|(i, v)| v * ctx.q_pow(-2 * (i * k) as i64))
                .sum::<C64>()
                / n as f64;
            if coef.norm() > 0.0 {
                out.data += &pk.data * coef;
            }
        }
        out
    }
}

/// Spectral projectors `P_i = (1/N) Σ_k q^{-2ik} C^k` of an `N`-torsion operator.
pub fn torsion_eigenprojectors(ctx: &RootContext, c: &TensorOperator) -> Result<Vec<TensorOperator>> {
    let tp = TorsionPowers::new(ctx, c)?;
    let n = ctx.n();
    Ok((0..n)
        .map(|i| {
            let mut vals = vec![ZERO; n];
            vals[i] = ONE;
            tp.functional(ctx, &vals)
        })
        .collect())
}

/// Matrix with independent standard complex Gaussian-like entries.
pub fn random_operator<R: Rng + ?Sized>(rng: &mut R, n: usize, arity: usize) -> TensorOperator {
    TensorOperator::from_fn(n, arity, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}
