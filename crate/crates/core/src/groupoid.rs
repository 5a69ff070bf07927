//! Labeled dotted triangulations, their elementary moves and the operators
//! assigned to those moves.
//!
//! A triangle is a list of three edge ids in counterclockwise order starting
//! after the dot: slot 1 ends at the dotted corner, slot 2 starts there and
//! slot 3 is the side opposite the dot. Its space is `M^{λ₃}_{λ₁,λ₂}`, and the
//! triangle is sane when `λ₁λ₂ = λ₃`. Each edge carries one weight shared by
//! all its incidences, so gluing is expressed by repeated edge ids.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cyclotomic::{RootContext, C64};
use crate::error::{QtError, Result};
use crate::operators::{a_canonical, t_compositional};
use crate::report::RelationReport;
use crate::tensorlinalg::{apply_embedded, perm_op, proportionality, TensorOperator};
use crate::weights::{require_regular, Weight};

/// Relative tolerance for weight comparisons (sanity, loop closure).
pub const WEIGHT_TOL: f64 = 1e-9;

pub type Label = usize;
pub type EdgeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub weight: Weight,
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdTriangulation {
    triangles: BTreeMap<Label, [EdgeId; 3]>,
    edges: BTreeMap<EdgeId, Edge>,
}

/// Whether intermediate objects of a path must be sane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sanity {
    #[default]
    Strict,
    /// Only the triangles touched by a move need to be sane.
    Permissive,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    /// Simultaneous dot rotations, `+1` counterclockwise, `-1` clockwise.
    A(BTreeMap<Label, i8>),
    /// Flip across `e = s.slot1 = t.slot3`.
    T { s: Label, t: Label },
    /// Inverse flip across `e = s.slot3 = t.slot2`.
    TInv { s: Label, t: Label },
    /// Relabel triangle `t` as `γ(t)`.
    P(BTreeMap<Label, Label>),
}

impl Move {
    pub fn a_single(t: Label, eps: i8) -> Self {
        Move::A(BTreeMap::from([(t, eps)]))
    }

    pub fn a_pair(s: Label, es: i8, t: Label, et: i8) -> Self {
        Move::A(BTreeMap::from([(s, es), (t, et)]))
    }

    pub fn swap(a: Label, b: Label) -> Self {
        Move::P(BTreeMap::from([(a, b), (b, a)]))
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::A(eps) => {
                let parts: Vec<String> = eps
                    .iter()
                    .map(|(t, e)| format!("{t}{}", if *e > 0 { "+" } else { "-" }))
                    .collect();
                write!(f, "A{{{}}}", parts.join(","))
            }
            Move::T { s, t } => write!(f, "T({s},{t})"),
            Move::TInv { s, t } => write!(f, "TInv({s},{t})"),
            Move::P(g) => {
                let parts: Vec<String> = g.iter().map(|(a, b)| format!("{a}->{b}")).collect();
                write!(f, "P({})", parts.join(","))
            }
        }
    }
}

fn round12(v: f64) -> i64 {
    (v * 1e12).round() as i64
}

impl LdTriangulation {
    pub fn new(triangles: BTreeMap<Label, [EdgeId; 3]>, edges: BTreeMap<EdgeId, Edge>) -> Result<Self> {
        let obj = Self { triangles, edges };
        obj.validate()?;
        Ok(obj)
    }

    fn validate(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(QtError::InvalidCombinatorics("no triangles".into()));
        }
        let mut count: BTreeMap<EdgeId, usize> = BTreeMap::new();
        for (t, tri) in &self.triangles {
            for e in tri {
                if !self.edges.contains_key(e) {
                    return Err(QtError::InvalidCombinatorics(format!("triangle {t} uses unknown edge {e}")));
                }
                *count.entry(*e).or_default() += 1;
            }
        }
        for (id, edge) in &self.edges {
            let c = count.get(id).copied().unwrap_or(0);
            let want = if edge.boundary { 1 } else { 2 };
            if c != want {
                return Err(QtError::InvalidCombinatorics(format!(
                    "edge {id} has {c} incidences, expected {want}"
                )));
            }
            if edge.weight.is_singular() {
                return Err(QtError::SingularWeight(format!("edge {id}: {}", edge.weight)));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<Label> {
        self.triangles.keys().copied().collect()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn edges(&self) -> &BTreeMap<EdgeId, Edge> {
        &self.edges
    }

    pub fn triangles(&self) -> &BTreeMap<Label, [EdgeId; 3]> {
        &self.triangles
    }

    /// 1-based tensor position of a label (labels in increasing order).
    pub fn position(&self, t: Label) -> Result<usize> {
        self.triangles
            .keys()
            .position(|&l| l == t)
            .map(|p| p + 1)
            .ok_or(QtError::UnknownTriangle(t))
    }

    pub fn triangle(&self, t: Label) -> Result<[EdgeId; 3]> {
        self.triangles.get(&t).copied().ok_or(QtError::UnknownTriangle(t))
    }

    pub fn weight(&self, e: EdgeId) -> Weight {
        self.edges[&e].weight
    }

    pub fn weights_of(&self, t: Label) -> Result<[Weight; 3]> {
        let tri = self.triangle(t)?;
        Ok(tri.map(|e| self.weight(e)))
    }

    pub fn triangle_is_sane(&self, t: Label) -> Result<bool> {
        let [w1, w2, w3] = self.weights_of(t)?;
        Ok(!w1.is_singular() && !w2.is_singular() && !w3.is_singular() && w1.mul(&w2).approx_eq(&w3, WEIGHT_TOL))
    }

    /// Per-triangle sanity.
    pub fn sanity_detail(&self) -> Vec<(Label, bool)> {
        self.triangles
            .keys()
            .map(|&t| (t, self.triangle_is_sane(t).unwrap_or(false)))
            .collect()
    }

    pub fn is_sane(&self) -> bool {
        self.sanity_detail().iter().all(|(_, ok)| *ok)
    }

    fn require_sane_triangles(&self, ts: &[Label]) -> Result<()> {
        for &t in ts {
            if !self.triangle_is_sane(t)? {
                return Err(QtError::NotSane(format!("triangle {t}")));
            }
        }
        Ok(())
    }

    /// Simultaneous `A`-moves. `A⁺` sends slots `[e₁,e₂,e₃]` to `[e₂,e₃,e₁]` and
    /// dualizes `e₃, e₁`; `A⁻` sends them to `[e₃,e₁,e₂]` and dualizes `e₂, e₃`.
    /// Every incidence of an edge must agree on dualization unless its weight
    /// is self-dual.
    pub fn move_a(&self, eps: &BTreeMap<Label, i8>) -> Result<Self> {
        let mut dualized: BTreeMap<EdgeId, (usize, usize)> = BTreeMap::new();
        for (&t, tri) in &self.triangles {
            let e = eps.get(&t).copied().unwrap_or(0);
            for (slot, id) in tri.iter().enumerate() {
                let d = match e {
                    1 => slot != 1,
                    -1 => slot != 0,
                    _ => false,
                };
                let entry = dualized.entry(*id).or_default();
                entry.0 += 1;
                entry.1 += d as usize;
            }
        }
        for (&t, &e) in eps {
            if !self.triangles.contains_key(&t) {
                return Err(QtError::UnknownTriangle(t));
            }
            if e != 1 && e != -1 {
                return Err(QtError::InvalidCombinatorics(format!("A-move exponent {e} on triangle {t}")));
            }
        }
        let mut out = self.clone();
        for (id, (total, dual)) in dualized {
            if dual == 0 {
                continue;
            }
            let w = self.weight(id);
            let wd = w.dual()?;
            if dual != total && !w.approx_eq(&wd, WEIGHT_TOL) {
                return Err(QtError::InconsistentLabels(format!(
                    "edge {id} would be dualized in {dual} of {total} incidences, but {w} is not self-dual"
                )));
            }
            if dual == total {
                out.edges.get_mut(&id).expect("edge exists").weight = wd;
            }
        }
        for (&t, &e) in eps {
            let [e1, e2, e3] = self.triangles[&t];
            let new = if e == 1 { [e2, e3, e1] } else { [e3, e1, e2] };
            out.triangles.insert(t, new);
        }
        Ok(out)
    }

    /// Flip across `e = s.slot1 = t.slot3`: `s ← [t₂, s₂, e]`, `t ← [t₁, e, s₃]`,
    /// with the new weight `w(e) = w(t₂) w(s₂)`.
    pub fn move_t(&self, s: Label, t: Label) -> Result<Self> {
        let (ts, tt) = (self.triangle(s)?, self.triangle(t)?);
        if s == t {
            return Err(QtError::NotAdjacent(s, t));
        }
        let e = ts[0];
        if tt[2] != e {
            return Err(if ts.iter().any(|x| tt.contains(x) && !self.edges[x].boundary) {
                QtError::BadDotConfiguration(format!("T({s},{t}) needs slot 1 of {s} to be slot 3 of {t}"))
            } else {
                QtError::NotAdjacent(s, t)
            });
        }
        if self.edges[&e].boundary {
            return Err(QtError::NotAdjacent(s, t));
        }
        let w = self.weight(tt[1]).mul(&self.weight(ts[1]));
        if w.is_singular() {
            return Err(QtError::RegularityViolation(format!("new diagonal weight {w} is singular")));
        }
        let mut out = self.clone();
        out.triangles.insert(s, [tt[1], ts[1], e]);
        out.triangles.insert(t, [tt[0], e, ts[2]]);
        out.edges.get_mut(&e).expect("edge exists").weight = w;
        Ok(out)
    }

    /// Inverse flip across `e = s'.slot3 = t'.slot2`: `t ← [t'₁, s'₁, e]`,
    /// `s ← [e, s'₂, t'₃]`, with `w(e) = w(t'₁) w(s'₁)`.
    pub fn move_tinv(&self, s: Label, t: Label) -> Result<Self> {
        let (ts, tt) = (self.triangle(s)?, self.triangle(t)?);
        if s == t {
            return Err(QtError::NotAdjacent(s, t));
        }
        let e = ts[2];
        if tt[1] != e {
            return Err(if ts.iter().any(|x| tt.contains(x) && !self.edges[x].boundary) {
                QtError::BadDotConfiguration(format!("TInv({s},{t}) needs slot 3 of {s} to be slot 2 of {t}"))
            } else {
                QtError::NotAdjacent(s, t)
            });
        }
        if self.edges[&e].boundary {
            return Err(QtError::NotAdjacent(s, t));
        }
        let w = self.weight(tt[0]).mul(&self.weight(ts[0]));
        if w.is_singular() {
            return Err(QtError::RegularityViolation(format!("new diagonal weight {w} is singular")));
        }
        let mut out = self.clone();
        out.triangles.insert(t, [tt[0], ts[0], e]);
        out.triangles.insert(s, [e, ts[1], tt[2]]);
        out.edges.get_mut(&e).expect("edge exists").weight = w;
        Ok(out)
    }

    /// Relabel by a permutation `γ` of the labels (missing labels are fixed).
    pub fn move_p(&self, gamma: &BTreeMap<Label, Label>) -> Result<Self> {
        let full = self.full_perm(gamma)?;
        let triangles = self.triangles.iter().map(|(t, tri)| (full[t], *tri)).collect();
        Ok(Self {
            triangles,
            edges: self.edges.clone(),
        })
    }

    fn full_perm(&self, gamma: &BTreeMap<Label, Label>) -> Result<BTreeMap<Label, Label>> {
        let mut full: BTreeMap<Label, Label> = self.triangles.keys().map(|&t| (t, t)).collect();
        for (&a, &b) in gamma {
            if !self.triangles.contains_key(&a) {
                return Err(QtError::UnknownTriangle(a));
            }
            if !self.triangles.contains_key(&b) {
                return Err(QtError::UnknownTriangle(b));
            }
            full.insert(a, b);
        }
        let image: BTreeSet<Label> = full.values().copied().collect();
        if image.len() != full.len() {
            return Err(QtError::InvalidCombinatorics("P-move is not a bijection".into()));
        }
        Ok(full)
    }

    /// Applies a move, checking the sanity demanded by `mode`.
    pub fn apply(&self, mv: &Move, mode: Sanity) -> Result<Self> {
        let touched: Vec<Label> = match mv {
            Move::A(eps) => eps.keys().copied().collect(),
            Move::T { s, t } | Move::TInv { s, t } => vec![*s, *t],
            Move::P(_) => vec![],
        };
        self.require_sane_triangles(&touched)?;
        let out = match mv {
            Move::A(eps) => self.move_a(eps)?,
            Move::T { s, t } => self.move_t(*s, *t)?,
            Move::TInv { s, t } => self.move_tinv(*s, *t)?,
            Move::P(g) => self.move_p(g)?,
        };
        if mode == Sanity::Strict && !out.is_sane() {
            let bad: Vec<Label> = out.sanity_detail().into_iter().filter(|x| !x.1).map(|x| x.0).collect();
            return Err(QtError::NotSane(format!("after {mv}, triangles {bad:?}")));
        }
        Ok(out)
    }

    /// Edge ids in order of first appearance, scanning triangles by label.
    fn edge_order(&self) -> Vec<EdgeId> {
        let mut seen = Vec::new();
        for tri in self.triangles.values() {
            for e in tri {
                if !seen.contains(e) {
                    seen.push(*e);
                }
            }
        }
        seen
    }

    /// Equality with triangle labels fixed, edge ids matched by first
    /// appearance, and weights within tolerance.
    pub fn same_object(&self, other: &Self, tol: f64) -> bool {
        if self.labels() != other.labels() {
            return false;
        }
        let (oa, ob) = (self.edge_order(), other.edge_order());
        if oa.len() != ob.len() {
            return false;
        }
        let ra: HashMap<EdgeId, usize> = oa.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let rb: HashMap<EdgeId, usize> = ob.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        for (ta, tb) in self.triangles.values().zip(other.triangles.values()) {
            if ta.map(|e| ra[&e]) != tb.map(|e| rb[&e]) {
                return false;
            }
        }
        oa.iter().zip(&ob).all(|(a, b)| {
            let (ea, eb) = (self.edges[a], other.edges[b]);
            ea.boundary == eb.boundary && ea.weight.approx_eq(&eb.weight, tol)
        })
    }

    /// Hashable form with labels fixed, edge ids renamed by first appearance
    /// and weights rounded to 12 decimals.
    pub fn labeled_key(&self) -> String {
        let order = self.edge_order();
        let rename: HashMap<EdgeId, usize> = order.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let mut s = String::new();
        for (t, tri) in &self.triangles {
            let r = tri.map(|e| rename[&e]);
            s.push_str(&format!("{t}:{},{},{};", r[0], r[1], r[2]));
        }
        for e in &order {
            let edge = self.edges[e];
            let w = edge.weight;
            s.push_str(&format!(
                "|{}{},{},{},{}",
                if edge.boundary { "b" } else { "i" },
                round12(w.x.re),
                round12(w.x.im),
                round12(w.y.re),
                round12(w.y.im)
            ));
        }
        s
    }

    /// [`labeled_key`](Self::labeled_key) minimised over relabelings of the triangles.
    pub fn canonical_key(&self) -> String {
        let labels = self.labels();
        let mut best: Option<String> = None;
        for perm in permutations(labels.len()) {
            let gamma: BTreeMap<Label, Label> = labels.iter().zip(&perm).map(|(a, &i)| (*a, labels[i])).collect();
            let key = self.move_p(&gamma).expect("permutation of own labels").labeled_key();
            if best.as_ref().map_or(true, |b| key < *b) {
                best = Some(key);
            }
        }
        best.expect("at least one triangle")
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("serializable")
    }

    /// Internal edges, as `(edge, [(label, slot)…])` with 1-based slots.
    pub fn internal_edges(&self) -> BTreeMap<EdgeId, Vec<(Label, usize)>> {
        let mut out: BTreeMap<EdgeId, Vec<(Label, usize)>> = BTreeMap::new();
        for (&t, tri) in &self.triangles {
            for (i, e) in tri.iter().enumerate() {
                if !self.edges[e].boundary {
                    out.entry(*e).or_default().push((t, i + 1));
                }
            }
        }
        out
    }

    /// All flip moves whose combinatorial precondition holds.
    pub fn candidate_flips(&self) -> Vec<Move> {
        let mut out = Vec::new();
        for &s in self.triangles.keys() {
            for &t in self.triangles.keys() {
                if s == t {
                    continue;
                }
                let (ts, tt) = (self.triangles[&s], self.triangles[&t]);
                if ts[0] == tt[2] && !self.edges[&ts[0]].boundary {
                    out.push(Move::T { s, t });
                }
                if ts[2] == tt[1] && !self.edges[&ts[2]].boundary {
                    out.push(Move::TInv { s, t });
                }
            }
        }
        out
    }

    /// All non-empty sign patterns for simultaneous `A`-moves.
    pub fn candidate_a_patterns(&self) -> Vec<Move> {
        let labels = self.labels();
        let mut out = Vec::new();
        let total = 3usize.pow(labels.len() as u32);
        for code in 1..total {
            let mut eps = BTreeMap::new();
            let mut c = code;
            for &t in &labels {
                match c % 3 {
                    1 => {
                        eps.insert(t, 1);
                    }
                    2 => {
                        eps.insert(t, -1);
                    }
                    _ => {}
                }
                c /= 3;
            }
            out.push(Move::A(eps));
        }
        out
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, k - 1);
            out.push(q);
        }
    }
    out
}

/// A triangle of an `n`-gon: three polygon vertices and the dotted one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NgonTriangle {
    pub vertices: [usize; 3],
    pub dot: usize,
}

impl NgonTriangle {
    /// Canonical dotting: the dot sits at the middle vertex.
    pub fn canonical(i: usize, j: usize, k: usize) -> Self {
        let mut v = [i, j, k];
        v.sort_unstable();
        Self { vertices: v, dot: v[1] }
    }
}

fn crosses(a: (usize, usize), b: (usize, usize)) -> bool {
    let inside = |x: usize, lo: usize, hi: usize| lo < x && x < hi;
    (inside(b.0, a.0, a.1) && !inside(b.1, a.0, a.1) && b.1 != a.0 && b.1 != a.1)
        || (inside(b.1, a.0, a.1) && !inside(b.0, a.0, a.1) && b.0 != a.0 && b.0 != a.1)
}

/// An `n`-gon with vertices `0..n` counterclockwise; edge `{i,j}` gets
/// `weight(i, j)` for `i < j`. Triangle `k` of the list gets label `k`.
/// Boundary edge `{i, i+1 mod n}` has id `i`; diagonals follow.
pub fn build_ngon(
    n: usize,
    tris: &[NgonTriangle],
    mut weight: impl FnMut(usize, usize) -> Weight,
) -> Result<LdTriangulation> {
    if n < 3 {
        return Err(QtError::InvalidCombinatorics(format!("{n}-gon")));
    }
    if tris.len() != n - 2 {
        return Err(QtError::InvalidCombinatorics(format!("{n}-gon needs {} triangles", n - 2)));
    }
    let key = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
    let mut ids: BTreeMap<(usize, usize), EdgeId> = BTreeMap::new();
    for i in 0..n {
        ids.insert(key(i, (i + 1) % n), i);
    }
    let mut diagonals = Vec::new();
    let mut triangles = BTreeMap::new();
    for (label, tri) in tris.iter().enumerate() {
        let mut v = tri.vertices;
        v.sort_unstable();
        if v[0] == v[1] || v[1] == v[2] || v[2] >= n {
            return Err(QtError::InvalidCombinatorics(format!("bad triangle {:?}", tri.vertices)));
        }
        let d = v
            .iter()
            .position(|&x| x == tri.dot)
            .ok_or_else(|| QtError::InvalidCombinatorics(format!("dot {} not a corner", tri.dot)))?;
        let (p, s) = (v[(d + 2) % 3], v[(d + 1) % 3]);
        let sides = [key(p, tri.dot), key(tri.dot, s), key(s, p)];
        let mut slot = [0; 3];
        for (i, side) in sides.iter().enumerate() {
            let next = n + diagonals.len();
            let id = *ids.entry(*side).or_insert_with(|| {
                diagonals.push(*side);
                next
            });
            slot[i] = id;
        }
        triangles.insert(label, slot);
    }
    if diagonals.len() != n - 3 {
        return Err(QtError::InvalidCombinatorics(format!(
            "{} diagonals, expected {}",
            diagonals.len(),
            n - 3
        )));
    }
    for (i, a) in diagonals.iter().enumerate() {
        for b in &diagonals[i + 1..] {
            if crosses(*a, *b) {
                return Err(QtError::InvalidCombinatorics(format!("diagonals {a:?} and {b:?} cross")));
            }
        }
    }
    let mut edges = BTreeMap::new();
    for (&(a, b), &id) in &ids {
        let w = weight(a, b);
        if w.is_singular() {
            return Err(QtError::SingularWeight(format!("edge {{{a},{b}}}: {w}")));
        }
        edges.insert(id, Edge { weight: w, boundary: id < n });
    }
    LdTriangulation::new(triangles, edges)
}

/// The fan triangles `(0, j, j+1)`.
pub fn fan(n: usize) -> Vec<NgonTriangle> {
    (1..n.saturating_sub(1)).map(|j| NgonTriangle::canonical(0, j, j + 1)).collect()
}

/// The `n`-gon with path weights `λ₁ … λ_{n-1}` on the edges `v_{i-1}v_i`, so
/// that `v_i v_j` carries `λ_{i+1} ⋯ λ_j`; canonically dotted, hence sane.
pub fn canonical_ngon(n: usize, path: &[Weight], tris: &[NgonTriangle]) -> Result<LdTriangulation> {
    if path.len() + 1 != n {
        return Err(QtError::InvalidCombinatorics(format!("{n}-gon needs {} path weights", n - 1)));
    }
    require_regular(path)?;
    for t in tris {
        if *t != NgonTriangle::canonical(t.vertices[0], t.vertices[1], t.vertices[2]) {
            return Err(QtError::BadDotConfiguration(format!("{:?} is not canonically dotted", t.vertices)));
        }
    }
    build_ngon(n, tris, |i, j| crate::weights::product(&path[i..j]))
}

/// The once-punctured torus as two triangles `s = [c, a, b]` (label 0) and
/// `t = [a, b, c]` (label 1) with `a = (1, α)`, `b = (−1, β)`, `c = ab`.
pub fn once_punctured_torus(alpha: f64, beta: f64) -> Result<LdTriangulation> {
    torus_from(Weight::real(1.0, alpha)?, Weight::real(-1.0, beta)?)
}

/// The alternative branch `x₁ = −1`, `x₂ = 1 − 2y₂/y₁`.
pub fn once_punctured_torus_alt(y1: f64, y2: f64) -> Result<LdTriangulation> {
    if y1 == 0.0 {
        return Err(QtError::ConstraintViolation("y1 = 0".into()));
    }
    torus_from(Weight::real(-1.0, y1)?, Weight::real(1.0 - 2.0 * y2 / y1, y2)?)
}

const EDGE_A: EdgeId = 0;
const EDGE_B: EdgeId = 1;
const EDGE_C: EdgeId = 2;

fn torus_from(a: Weight, b: Weight) -> Result<LdTriangulation> {
    let c = a.mul(&b);
    if c.is_singular() {
        return Err(QtError::ConstraintViolation(format!("λ1λ2 = {c} is singular")));
    }
    let edges = BTreeMap::from([
        (EDGE_A, Edge { weight: a, boundary: false }),
        (EDGE_B, Edge { weight: b, boundary: false }),
        (EDGE_C, Edge { weight: c, boundary: false }),
    ]);
    let triangles = BTreeMap::from([(0, [EDGE_C, EDGE_A, EDGE_B]), (1, [EDGE_A, EDGE_B, EDGE_C])]);
    LdTriangulation::new(triangles, edges)
}

/// Operator attached to a move: local factors, or a permutation of factors.
#[derive(Debug, Clone)]
pub enum MoveOperator {
    Local(Vec<(TensorOperator, Vec<usize>)>),
    Perm(Vec<usize>),
}

impl MoveOperator {
    fn apply(&self, n: usize, arity: usize, x: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        match self {
            MoveOperator::Local(parts) => {
                let mut acc = x.clone();
                for (op, pos) in parts {
                    acc = apply_embedded(op, pos, arity, &acc)?;
                }
                Ok(acc)
            }
            MoveOperator::Perm(gamma) => {
                let p = perm_op(n, gamma)?;
                let xo = TensorOperator::new(n, arity, x.clone())?;
                Ok(p.try_mul(&xo)?.into_data())
            }
        }
    }
}

type CacheKey = (u8, [u64; 12]);

/// Builds move operators, caching `A` and `T` by weights.
pub struct Functor<'a> {
    ctx: &'a RootContext,
    cache: RefCell<HashMap<CacheKey, TensorOperator>>,
}

fn bits(ws: &[Weight]) -> [u64; 12] {
    let mut out = [0u64; 12];
    for (i, w) in ws.iter().enumerate() {
        out[4 * i] = w.x.re.to_bits();
        out[4 * i + 1] = w.x.im.to_bits();
        out[4 * i + 2] = w.y.re.to_bits();
        out[4 * i + 3] = w.y.im.to_bits();
    }
    out
}

impl<'a> Functor<'a> {
    pub fn new(ctx: &'a RootContext) -> Self {
        Self {
            ctx,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn ctx(&self) -> &RootContext {
        self.ctx
    }

    fn cached(&self, tag: u8, ws: &[Weight], f: impl FnOnce() -> Result<TensorOperator>) -> Result<TensorOperator> {
        let key = (tag, bits(ws));
        if let Some(op) = self.cache.borrow().get(&key) {
            return Ok(op.clone());
        }
        let op = f()?;
        self.cache.borrow_mut().insert(key, op.clone());
        Ok(op)
    }

    /// `A(λ,λ')`.
    pub fn a_plus(&self, l: &Weight, lp: &Weight) -> Result<TensorOperator> {
        self.cached(0, &[*l, *lp], || a_canonical(self.ctx, l, lp))
    }

    /// `A(λ₃*, λ₁)^{-1}`.
    pub fn a_minus(&self, l1: &Weight, l3: &Weight) -> Result<TensorOperator> {
        let l3d = l3.dual()?;
        self.cached(1, &[l3d, *l1], || a_canonical(self.ctx, &l3d, l1)?.inverse())
    }

    pub fn t(&self, l: &Weight, lp: &Weight, lpp: &Weight) -> Result<TensorOperator> {
        self.cached(2, &[*l, *lp, *lpp], || t_compositional(self.ctx, l, lp, lpp))
    }

    pub fn t_inv(&self, l: &Weight, lp: &Weight, lpp: &Weight) -> Result<TensorOperator> {
        self.cached(3, &[*l, *lp, *lpp], || self.t(l, lp, lpp)?.inverse())
    }

    /// The operator of `mv` applied to `obj`: `⊗_t A_t^{ε_t}` for `A`-moves,
    /// `T_{λ_{t₁},λ_{t₂},λ_{s₂}}` on factors `(s, t)` for a flip, and the
    /// factor permutation for `P`.
    pub fn move_operator(&self, obj: &LdTriangulation, mv: &Move) -> Result<MoveOperator> {
        match mv {
            Move::A(eps) => {
                let mut parts = Vec::new();
                for (&t, &e) in eps {
                    let [w1, w2, w3] = obj.weights_of(t)?;
                    let op = if e > 0 { self.a_plus(&w1, &w2)? } else { self.a_minus(&w1, &w3)? };
                    parts.push((op, vec![obj.position(t)?]));
                }
                Ok(MoveOperator::Local(parts))
            }
            Move::T { s, t } => {
                let (ws, wt) = (obj.weights_of(*s)?, obj.weights_of(*t)?);
                let op = self.t(&wt[0], &wt[1], &ws[1])?;
                Ok(MoveOperator::Local(vec![(op, vec![obj.position(*s)?, obj.position(*t)?])]))
            }
            Move::TInv { s, t } => {
                let (ws, wt) = (obj.weights_of(*s)?, obj.weights_of(*t)?);
                let op = self.t_inv(&wt[0], &ws[0], &ws[1])?;
                Ok(MoveOperator::Local(vec![(op, vec![obj.position(*s)?, obj.position(*t)?])]))
            }
            Move::P(g) => {
                let full = obj.full_perm(g)?;
                let mut gamma = Vec::with_capacity(full.len());
                for (a, b) in &full {
                    let _ = a;
                    gamma.push(obj.position(*b)?);
                }
                Ok(MoveOperator::Perm(gamma))
            }
        }
    }

    /// The full operator on `(C^N)^{⊗r}`.
    pub fn functor_op(&self, obj: &LdTriangulation, mv: &Move) -> Result<TensorOperator> {
        let n = self.ctx.n();
        let r = obj.num_triangles();
        let id = TensorOperator::identity(n, r);
        let data = self.move_operator(obj, mv)?.apply(n, r, id.data())?;
        TensorOperator::new(n, r, data)
    }

    /// Composes the operators along `moves` from `start`, requires the path to
    /// close up, and checks that the composite is a scalar.
    pub fn verify_loop(
        &self,
        name: &str,
        start: &LdTriangulation,
        moves: &[Move],
        mode: Sanity,
        expected: Option<C64>,
    ) -> Result<RelationReport> {
        let n = self.ctx.n();
        let r = start.num_triangles();
        if mode == Sanity::Strict && !start.is_sane() {
            return Err(QtError::NotSane("starting object".into()));
        }
        let mut cur = start.clone();
        let d = n.pow(r as u32);
        let mut acc = DMatrix::identity(d, d);
        for mv in moves {
            let op = self.move_operator(&cur, mv)?;
            acc = op.apply(n, r, &acc)?;
            cur = cur.apply(mv, mode)?;
        }
        if !cur.same_object(start, WEIGHT_TOL) {
            return Err(QtError::NotALoop);
        }
        let comp = TensorOperator::new(n, r, acc)?;
        let (s, res) = proportionality(&comp, &TensorOperator::identity(n, r))?;
        let weights = start.edges.values().map(|e| e.weight).collect();
        Ok(RelationReport::evaluate(name, self.ctx, d, res, Some(s), expected, weights))
    }
}

/// A loop of moves with the scalar its composite should equal, if known.
#[derive(Debug, Clone)]
pub struct LoopSpec {
    pub name: String,
    pub start: LdTriangulation,
    pub moves: Vec<Move>,
    pub expected: Option<C64>,
}

/// Closes `moves` from `start` if possible.
fn closes(start: &LdTriangulation, moves: &[Move], mode: Sanity) -> bool {
    let mut cur = start.clone();
    for mv in moves {
        match cur.apply(mv, mode) {
            Ok(next) => cur = next,
            Err(_) => return false,
        }
    }
    cur.same_object(start, WEIGHT_TOL)
}

/// Simple cycles of flips through `start`, up to `max_len` moves.
pub fn flip_loops(start: &LdTriangulation, max_len: usize, mode: Sanity) -> Vec<Vec<Move>> {
    let mut out = Vec::new();
    let mut path = Vec::new();
    let mut seen = vec![start.labeled_key()];
    fn dfs(
        cur: &LdTriangulation,
        start: &LdTriangulation,
        max_len: usize,
        mode: Sanity,
        path: &mut Vec<Move>,
        seen: &mut Vec<String>,
        out: &mut Vec<Vec<Move>>,
    ) {
        if path.len() == max_len {
            return;
        }
        for mv in cur.candidate_flips() {
            let Ok(next) = cur.apply(&mv, mode) else { continue };
            path.push(mv);
            if next.same_object(start, WEIGHT_TOL) {
                out.push(path.clone());
            } else {
                let key = next.labeled_key();
                if !seen.contains(&key) {
                    seen.push(key);
                    dfs(&next, start, max_len, mode, path, seen, out);
                    seen.pop();
                }
            }
            path.pop();
        }
    }
    dfs(start, start, max_len, mode, &mut path, &mut seen, &mut out);
    out
}

/// Whether two flips touch disjoint pairs of triangles.
fn flip_support(mv: &Move) -> Option<[Label; 2]> {
    match mv {
        Move::T { s, t } | Move::TInv { s, t } => Some([*s, *t]),
        _ => None,
    }
}

/// Classifies a flip loop: `pentagon`, `commute`, `inverse` or `flip_loop`.
pub fn classify_flip_loop(moves: &[Move]) -> &'static str {
    match moves.len() {
        2 => "inverse",
        5 => "pentagon",
        4 => {
            let a = flip_support(&moves[0]);
            let b = flip_support(&moves[1]);
            match (a, b) {
                (Some(a), Some(b)) if !a.iter().any(|x| b.contains(x)) => "commute",
                _ => "flip_loop",
            }
        }
        _ => "flip_loop",
    }
}

/// Per-triangle exponent sequences over three steps whose rotations cancel.
const TRIPLES: [[i8; 3]; 9] = [
    [0, 0, 0],
    [1, 1, 1],
    [-1, -1, -1],
    [1, -1, 0],
    [1, 0, -1],
    [0, 1, -1],
    [-1, 1, 0],
    [-1, 0, 1],
    [0, -1, 1],
];

/// `A³` loops: for each triangle `t` and sign `σ`, three `A`-moves turning
/// `t` a full time, with the other triangles either turning fully too or
/// rotating forth and back as needed to keep the edge labels consistent.
/// The predicted scalar is `∏ q^{-2σ_u m_{x_{u1}, x_{u2}}}` over the triangles
/// `u` that make a full turn.
pub fn a3_loops(ctx: &RootContext, start: &LdTriangulation, mode: Sanity) -> Result<Vec<LoopSpec>> {
    let labels = start.labels();
    let mut out = Vec::new();
    for &t in &labels {
        let others: Vec<Label> = labels.iter().copied().filter(|&u| u != t).collect();
        for sigma in [1i8, -1] {
            let total = TRIPLES.len().pow(others.len() as u32);
            for code in 0..total {
                let mut c = code;
                let mut seqs: BTreeMap<Label, [i8; 3]> = BTreeMap::from([(t, [sigma; 3])]);
                for &u in &others {
                    seqs.insert(u, TRIPLES[c % TRIPLES.len()]);
                    c /= TRIPLES.len();
                }
                let moves: Vec<Move> = (0..3)
                    .map(|k| Move::A(seqs.iter().filter(|(_, s)| s[k] != 0).map(|(&u, s)| (u, s[k])).collect()))
                    .collect();
                if moves.iter().any(|m| matches!(m, Move::A(e) if e.is_empty())) || !closes(start, &moves, mode) {
                    continue;
                }
                let mut expected = C64::new(1.0, 0.0);
                for (&u, s) in &seqs {
                    if s[0] != 0 && s[0] == s[1] && s[1] == s[2] {
                        let [w1, w2, _] = start.weights_of(u)?;
                        expected *= ctx.q_pow(-2 * s[0] as i64 * ctx.cocycle_m(w1.x, w2.x)?);
                    }
                }
                out.push(LoopSpec {
                    name: format!("a3 {}", fmt_moves(&moves)),
                    start: start.clone(),
                    moves,
                    expected: Some(expected),
                });
                break;
            }
        }
    }
    Ok(out)
}

/// Sign patterns on the labels outside `fixed`, including the empty one.
fn patterns_outside(start: &LdTriangulation, fixed: &[Label]) -> Vec<BTreeMap<Label, i8>> {
    let others: Vec<Label> = start.labels().into_iter().filter(|l| !fixed.contains(l)).collect();
    let total = 3usize.pow(others.len() as u32);
    (0..total)
        .map(|code| {
            let mut c = code;
            let mut m = BTreeMap::new();
            for &t in &others {
                match c % 3 {
                    1 => {
                        m.insert(t, 1);
                    }
                    2 => {
                        m.insert(t, -1);
                    }
                    _ => {}
                }
                c /= 3;
            }
            m
        })
        .collect()
}

fn with_extra(base: &[(Label, i8)], extra: &BTreeMap<Label, i8>, sign: i8) -> Move {
    let mut m: BTreeMap<Label, i8> = base.iter().copied().collect();
    for (&t, &e) in extra {
        m.insert(t, sign * e);
    }
    Move::A(m)
}

/// For every flippable pair `(s, t)` across `e = s.slot1 = t.slot3` (labels
/// `a = s`, `b = t`): the loop `[A{a+,b−}, T(b,a), A{a−,b+}, TInv(a,b)]`, with
/// compensating rotations on the other triangles where needed. The predicted
/// scalar is `q^{2(m_{x₁,x₂} − m_{x₁,x₂x₃})}` with `λ₁ = w(t₁)`, `λ₂ = w(t₂)`,
/// `λ₃ = w(s₂)`.
pub fn ata_loops(ctx: &RootContext, start: &LdTriangulation, mode: Sanity) -> Result<Vec<LoopSpec>> {
    let mut out = Vec::new();
    for mv in start.candidate_flips() {
        let Move::T { s: a, t: b } = mv else { continue };
        let (ws, wt) = (start.weights_of(a)?, start.weights_of(b)?);
        let (l1, l2, l3) = (wt[0], wt[1], ws[1]);
        let m = ctx.cocycle_m(l1.x, l2.x)? - ctx.cocycle_m(l1.x, l2.x * l3.x)?;
        for extra in patterns_outside(start, &[a, b]) {
            let moves = vec![
                with_extra(&[(a, 1), (b, -1)], &extra, 1),
                Move::T { s: b, t: a },
                with_extra(&[(a, -1), (b, 1)], &extra, -1),
                Move::TInv { s: a, t: b },
            ];
            if closes(start, &moves, mode) {
                out.push(LoopSpec {
                    name: format!("ata {}", fmt_moves(&moves)),
                    start: start.clone(),
                    moves,
                    expected: Some(ctx.q_pow(2 * m)),
                });
                break;
            }
        }
    }
    Ok(out)
}

/// For every flippable pair `(s, t)` with `b = s`, `a = t`: the loop
/// `[T(b,a), A{a+}, T(a,b), A{a−,b−}, P(ab)]` with scalar 1, again with
/// compensating rotations where needed.
pub fn tat_loops(start: &LdTriangulation, mode: Sanity) -> Result<Vec<LoopSpec>> {
    let mut out = Vec::new();
    for mv in start.candidate_flips() {
        let Move::T { s: b, t: a } = mv else { continue };
        for extra in patterns_outside(start, &[a, b]) {
            let moves = vec![
                Move::T { s: b, t: a },
                with_extra(&[(a, 1)], &extra, 1),
                Move::T { s: a, t: b },
                with_extra(&[(a, -1), (b, -1)], &extra, -1),
                Move::swap(a, b),
            ];
            if closes(start, &moves, mode) {
                out.push(LoopSpec {
                    name: format!("tat {}", fmt_moves(&moves)),
                    start: start.clone(),
                    moves,
                    expected: Some(C64::new(1.0, 0.0)),
                });
                break;
            }
        }
    }
    Ok(out)
}

pub fn fmt_moves(moves: &[Move]) -> String {
    moves.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" ")
}

/// Every loop instance available from `start`: flip loops up to `max_len`,
/// `A³` loops, `ATA` and `TAT` loops. Flip loops are predicted to be exact.
pub fn all_relation_loops(
    ctx: &RootContext,
    start: &LdTriangulation,
    max_len: usize,
    mode: Sanity,
) -> Result<Vec<LoopSpec>> {
    let mut out: Vec<LoopSpec> = flip_loops(start, max_len, mode)
        .into_iter()
        .map(|moves| LoopSpec {
            name: format!("{} {}", classify_flip_loop(&moves), fmt_moves(&moves)),
            start: start.clone(),
            moves,
            expected: Some(C64::new(1.0, 0.0)),
        })
        .collect();
    out.extend(a3_loops(ctx, start, mode)?);
    out.extend(ata_loops(ctx, start, mode)?);
    out.extend(tat_loops(start, mode)?);
    Ok(out)
}

/// Which relation a `groupoid loop` run instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopRelation {
    A3,
    Pentagon,
    Ata,
    Tat,
    Commute,
}

impl std::str::FromStr for LoopRelation {
    type Err = QtError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a3" => Ok(LoopRelation::A3),
            "pentagon" => Ok(LoopRelation::Pentagon),
            "ata" => Ok(LoopRelation::Ata),
            "tat" => Ok(LoopRelation::Tat),
            "commute" => Ok(LoopRelation::Commute),
            _ => Err(QtError::UnknownKind(s.to_string())),
        }
    }
}

/// The smallest canonical fan `n`-gon instance of a relation, built from the path weights.
pub fn relation_loop(ctx: &RootContext, rel: LoopRelation, path: &[Weight]) -> Result<LoopSpec> {
    let n = path.len() + 1;
    let obj = canonical_ngon(n, path, &fan(n))?;
    let mode = Sanity::Strict;
    let none = || QtError::InvalidCombinatorics(format!("no {rel:?} loop on the fan {n}-gon"));
    match rel {
        LoopRelation::A3 => a3_loops(ctx, &obj, mode)?.into_iter().next().ok_or_else(none),
        LoopRelation::Ata => ata_loops(ctx, &obj, mode)?.into_iter().next().ok_or_else(none),
        LoopRelation::Tat => tat_loops(&obj, mode)?.into_iter().next().ok_or_else(none),
        LoopRelation::Pentagon | LoopRelation::Commute => {
            let (len, tag) = if rel == LoopRelation::Pentagon { (5, "pentagon") } else { (4, "commute") };
            flip_loops(&obj, len, mode)
                .into_iter()
                .find(|m| m.len() == len && classify_flip_loop(m) == tag)
                .map(|moves| LoopSpec {
                    name: format!("{tag} {}", fmt_moves(&moves)),
                    start: obj.clone(),
                    moves,
                    expected: Some(C64::new(1.0, 0.0)),
                })
                .ok_or_else(none)
        }
    }
}

/// Number of path weights (polygon size minus one) a relation needs.
pub fn relation_path_len(rel: LoopRelation) -> usize {
    match rel {
        LoopRelation::A3 => 2,
        LoopRelation::Ata | LoopRelation::Tat => 3,
        LoopRelation::Pentagon => 4,
        LoopRelation::Commute => 5,
    }
}

/// Result of exploring the sane component of the once-punctured torus.
#[derive(Debug, Clone, Serialize)]
pub struct TorusReport {
    pub alpha: f64,
    pub beta: f64,
    pub depth: usize,
    /// Distinct objects reached within `d` moves, for `d = 0..=depth`.
    pub counts: Vec<usize>,
    pub strictly_increasing: bool,
    /// Status of the three seed flips, keyed by the edge's name.
    pub seed_flips: BTreeMap<String, FlipStatus>,
    /// Whether an `A`-move followed by a flip of the `x = 1` edge ever succeeded.
    pub lambda1_flip_ever_allowed: bool,
    pub invariants_hold: bool,
    pub invariant_failures: Vec<String>,
    /// Blocked move attempts, counted by reason.
    pub blocked: BTreeMap<String, usize>,
    #[serde(skip)]
    pub dot: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlipStatus {
    pub allowed: bool,
    pub reason: Option<String>,
}

fn reason_class(e: &QtError) -> String {
    match e {
        QtError::NotAdjacent(..) => "not adjacent".into(),
        QtError::BadDotConfiguration(_) => "dot configuration".into(),
        QtError::RegularityViolation(_) => "new diagonal singular".into(),
        QtError::InconsistentLabels(_) => "inconsistent edge labels".into(),
        QtError::NotSane(_) => "result not sane".into(),
        other => other.to_string(),
    }
}

/// `(exactly one x=1 edge and two x=−1 edges, y-conditions)` at a node.
fn torus_invariants(obj: &LdTriangulation) -> std::result::Result<(), String> {
    let tol = WEIGHT_TOL;
    let ws: Vec<Weight> = obj.edges.values().map(|e| e.weight).collect();
    let is = |z: C64, v: f64| (z - v).norm() <= tol;
    let plus: Vec<&Weight> = ws.iter().filter(|w| is(w.x, 1.0)).collect();
    let minus: Vec<&Weight> = ws.iter().filter(|w| is(w.x, -1.0)).collect();
    if plus.len() != 1 || minus.len() != 2 {
        return Err(format!("x-values {:?}", ws.iter().map(|w| w.x).collect::<Vec<_>>()));
    }
    if !obj.is_sane() {
        return Err("not sane".into());
    }
    let ya = plus[0].y;
    for b in &minus {
        let yb = b.y;
        let scale = 1.0f64.max(ya.norm()).max(yb.norm());
        if (ya - yb).norm() <= tol * scale || (ya + yb).norm() <= tol * scale || (2.0 * ya - yb).norm() <= tol * scale {
            return Err(format!("y-condition fails for y1 = {ya}, y2 = {yb}"));
        }
    }
    Ok(())
}

/// Breadth-first exploration of admissible, sane moves from the seed
/// `λ₁ = (1, α)`, `λ₂ = (−1, β)`.
pub fn opt_torus_explore(alpha: f64, beta: f64, depth: usize) -> Result<TorusReport> {
    if alpha == 0.0 || beta == 0.0 {
        return Err(QtError::ConstraintViolation("α and β must be nonzero".into()));
    }
    let seed = once_punctured_torus(alpha, beta)?;
    if !seed.is_sane() {
        return Err(QtError::ConstraintViolation("seed is not sane".into()));
    }
    let mode = Sanity::Strict;
    let status = |r: Result<LdTriangulation>| match r {
        Ok(_) => FlipStatus { allowed: true, reason: None },
        Err(e) => FlipStatus {
            allowed: false,
            reason: Some(e.to_string()),
        },
    };
    let mut seed_flips = BTreeMap::new();
    seed_flips.insert("lambda3".to_string(), status(seed.apply(&Move::T { s: 0, t: 1 }, mode)));
    seed_flips.insert("lambda2".to_string(), status(seed.apply(&Move::TInv { s: 0, t: 1 }, mode)));
    let l1_attempts = [
        Move::T { s: 1, t: 0 },
        Move::TInv { s: 1, t: 0 },
    ];
    let l1 = l1_attempts
        .iter()
        .map(|m| seed.apply(m, mode))
        .find(|r| r.is_ok())
        .unwrap_or_else(|| seed.apply(&l1_attempts[0], mode));
    seed_flips.insert("lambda1".to_string(), status(l1));

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut frontier = VecDeque::new();
    let mut counts = vec![1];
    let mut blocked: BTreeMap<String, usize> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut dot = String::from("digraph torus {\n");
    let mut lambda1_flip = false;
    index.insert(seed.canonical_key(), 0);
    dot.push_str("  n0 [label=\"seed\"];\n");
    frontier.push_back((seed, 0usize));
    if let Some((obj, _)) = frontier.front() {
        if let Err(e) = torus_invariants(obj) {
            failures.push(format!("node 0: {e}"));
        }
    }
    let mut level = 0;
    while level < depth {
        let mut next = VecDeque::new();
        while let Some((obj, id)) = frontier.pop_front() {
            let x1_edge = obj
                .edges
                .iter()
                .find(|(_, e)| (e.weight.x - 1.0).norm() <= WEIGHT_TOL)
                .map(|(id, _)| *id);
            let mut moves = obj.candidate_flips();
            moves.extend(obj.candidate_a_patterns());
            for extra in [Move::T { s: 0, t: 1 }, Move::T { s: 1, t: 0 }, Move::TInv { s: 0, t: 1 }, Move::TInv { s: 1, t: 0 }] {
                if !moves.contains(&extra) {
                    moves.push(extra);
                }
            }
            for mv in moves {
                match obj.apply(&mv, mode) {
                    Ok(child) => {
                        if let (Move::T { s, .. } | Move::TInv { s, .. }, Some(x1)) = (&mv, x1_edge) {
                            let flipped = match mv {
                                Move::T { .. } => obj.triangles[s][0],
                                _ => obj.triangles[s][2],
                            };
                            if flipped == x1 {
                                lambda1_flip = true;
                            }
                        }
                        let key = child.canonical_key();
                        let cid = match index.get(&key) {
                            Some(&c) => c,
                            None => {
                                let c = index.len();
                                index.insert(key, c);
                                if let Err(e) = torus_invariants(&child) {
                                    failures.push(format!("node {c}: {e}"));
                                }
                                dot.push_str(&format!("  n{c};\n"));
                                next.push_back((child, c));
                                c
                            }
                        };
                        dot.push_str(&format!("  n{id} -> n{cid} [label=\"{mv}\"];\n"));
                    }
                    Err(e) => *blocked.entry(reason_class(&e)).or_default() += 1,
                }
            }
        }
        level += 1;
        counts.push(index.len());
        frontier = next;
    }
    dot.push_str("}\n");
    let strictly_increasing = counts.windows(2).all(|w| w[1] > w[0]);
    Ok(TorusReport {
        alpha,
        beta,
        depth,
        counts,
        strictly_increasing,
        seed_flips,
        lambda1_flip_ever_allowed: lambda1_flip,
        invariants_hold: failures.is_empty(),
        invariant_failures: failures,
        blocked,
        dot,
    })
}

impl TorusReport {
    pub fn to_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("serializable");
        v["objects"] = json!(self.counts.last());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path(seed: u64, len: usize) -> Vec<Weight> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Weight::sample_regular(&mut rng, len)
    }

    #[test]
    fn ngon_combinatorics() {
        let tri = canonical_ngon(3, &path(1, 2), &fan(3)).unwrap();
        assert_eq!(tri.num_triangles(), 1);
        assert!(tri.edges().values().all(|e| e.boundary));
        assert!(tri.is_sane());
        for n in 4..=7 {
            let obj = canonical_ngon(n, &path(n as u64, n - 1), &fan(n)).unwrap();
            assert_eq!(obj.num_triangles(), n - 2);
            assert_eq!(obj.edges().values().filter(|e| e.boundary).count(), n);
            assert_eq!(obj.internal_edges().len(), n - 3);
            assert!(obj.is_sane());
        }
        let bad = [NgonTriangle::canonical(0, 1, 3), NgonTriangle::canonical(0, 2, 3)];
        assert!(build_ngon(4, &bad, |_, _| Weight::real(2.0, 1.0).unwrap()).is_err());
        let crossing = [
            NgonTriangle::canonical(0, 1, 2),
            NgonTriangle::canonical(1, 2, 4),
            NgonTriangle::canonical(0, 3, 4),
        ];
        assert!(build_ngon(5, &crossing, |_, _| Weight::real(2.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn four_gon_flip() {
        let p = path(2, 3);
        let obj = canonical_ngon(4, &p, &fan(4)).unwrap();
        // fan: label 0 = (0,1,2), label 1 = (0,2,3); the diagonal 02 is slot 3 of 0 and slot 1 of 1
        assert_eq!(obj.candidate_flips(), vec![Move::T { s: 1, t: 0 }]);
        let flipped = obj.apply(&Move::T { s: 1, t: 0 }, Sanity::Strict).unwrap();
        let expect = canonical_ngon(
            4,
            &p,
            &[NgonTriangle::canonical(0, 1, 3), NgonTriangle::canonical(1, 2, 3)],
        )
        .unwrap()
        .move_p(&BTreeMap::from([(0, 0), (1, 1)]))
        .unwrap();
        assert!(flipped.is_sane());
        // new diagonal weight λ₂λ₃
        let d = flipped.triangles()[&0][1];
        assert!(flipped.weight(d).approx_eq(&p[1].mul(&p[2]), 1e-12));
        assert_eq!(flipped.canonical_key(), expect.canonical_key());
        let back = flipped.apply(&Move::TInv { s: 1, t: 0 }, Sanity::Strict).unwrap();
        assert!(back.same_object(&obj, 1e-12));
        assert!(matches!(obj.move_t(0, 1), Err(QtError::BadDotConfiguration(_))));
    }

    #[test]
    fn a_moves() {
        let obj = canonical_ngon(3, &path(3, 2), &fan(3)).unwrap();
        let w = obj.weights_of(0).unwrap();
        let once = obj.move_a(&BTreeMap::from([(0, 1)])).unwrap();
        let w1 = once.weights_of(0).unwrap();
        assert!(w1[0].approx_eq(&w[1], 1e-12));
        assert!(w1[1].approx_eq(&w[2].dual().unwrap(), 1e-12));
        assert!(w1[2].approx_eq(&w[0].dual().unwrap(), 1e-12));
        let mut cur = obj.clone();
        for _ in 0..3 {
            cur = cur.apply(&Move::a_single(0, 1), Sanity::Strict).unwrap();
        }
        assert!(cur.same_object(&obj, 1e-9));
        let inv = once.apply(&Move::a_single(0, -1), Sanity::Strict).unwrap();
        assert!(inv.same_object(&obj, 1e-9));
        // a single rotation inside a 4-gon breaks the shared diagonal label
        let quad = canonical_ngon(4, &path(4, 3), &fan(4)).unwrap();
        assert!(matches!(quad.move_a(&BTreeMap::from([(0, 1)])), Err(QtError::InconsistentLabels(_))));
        assert!(quad.move_a(&BTreeMap::from([(0, 1), (1, 1)])).is_ok());
        assert!(matches!(quad.move_a(&BTreeMap::from([(5, 1)])), Err(QtError::UnknownTriangle(5))));
    }

    #[test]
    fn p_moves() {
        let obj = canonical_ngon(5, &path(5, 4), &fan(5)).unwrap();
        let id = obj.move_p(&BTreeMap::new()).unwrap();
        assert_eq!(id, obj);
        let sw = Move::swap(0, 2);
        let twice = obj.apply(&sw, Sanity::Strict).unwrap().apply(&sw, Sanity::Strict).unwrap();
        assert_eq!(twice, obj);
        // composition matches permutation composition
        let g1 = BTreeMap::from([(0, 1), (1, 2), (2, 0)]);
        let g2 = BTreeMap::from([(0, 2), (2, 0)]);
        let composed: BTreeMap<Label, Label> = [0, 1, 2].iter().map(|t| (*t, g2.get(&g1[t]).copied().unwrap_or(g1[t]))).collect();
        let lhs = obj.move_p(&g1).unwrap().move_p(&g2).unwrap();
        assert_eq!(lhs, obj.move_p(&composed).unwrap());
        assert!(obj.move_p(&BTreeMap::from([(0, 1)])).is_err());
    }

    #[test]
    fn every_diagonal_flips_one_way() {
        let obj = canonical_ngon(6, &path(6, 5), &fan(6)).unwrap();
        let flips = obj.candidate_flips();
        assert_eq!(flips.len(), 3);
        // associahedron K5 has 14 vertices
        let mut seen = vec![obj.labeled_key()];
        let mut frontier = vec![obj];
        let mut unlabeled = BTreeSet::new();
        while let Some(cur) = frontier.pop() {
            unlabeled.insert(cur.canonical_key());
            for mv in cur.candidate_flips() {
                let next = cur.apply(&mv, Sanity::Strict).unwrap();
                let k = next.labeled_key();
                if !seen.contains(&k) {
                    seen.push(k);
                    frontier.push(next);
                }
            }
        }
        let shapes: BTreeSet<String> = unlabeled.iter().map(|k| k.split('|').next().unwrap().to_string()).collect();
        assert!(shapes.len() <= unlabeled.len());
        assert!(seen.len() >= 14);
    }

    #[test]
    fn functor_single_moves() {
        let ctx = RootContext::new(3).unwrap();
        let f = Functor::new(&ctx);
        let p = path(7, 2);
        let tri = canonical_ngon(3, &p, &fan(3)).unwrap();
        let op = f.functor_op(&tri, &Move::a_single(0, 1)).unwrap();
        assert!(op.rel_diff(&a_canonical(&ctx, &p[0], &p[1]).unwrap()).unwrap() < 1e-14);
        let p = path(8, 3);
        let quad = canonical_ngon(4, &p, &fan(4)).unwrap();
        let op = f.functor_op(&quad, &Move::T { s: 1, t: 0 }).unwrap();
        let t = t_compositional(&ctx, &p[0], &p[1], &p[2]).unwrap();
        let expect = crate::reps::swap21(&ctx, &t).unwrap();
        assert!(op.rel_diff(&expect).unwrap() < 1e-14);
        let op = f.functor_op(&quad, &Move::swap(0, 1)).unwrap();
        assert_eq!(op, perm_op(3, &[2, 1]).unwrap());
    }

    #[test]
    fn relation_loops_small() {
        let ctx = RootContext::new(3).unwrap();
        let f = Functor::new(&ctx);
        for rel in [LoopRelation::A3, LoopRelation::Ata, LoopRelation::Tat, LoopRelation::Pentagon, LoopRelation::Commute] {
            let spec = relation_loop(&ctx, rel, &path(9, relation_path_len(rel))).unwrap();
            let rep = f.verify_loop(&spec.name, &spec.start, &spec.moves, Sanity::Strict, spec.expected).unwrap();
            assert!(rep.passed, "{rel:?}: {rep:?}");
        }
    }

    #[test]
    fn non_loop_rejected() {
        let ctx = RootContext::new(3).unwrap();
        let f = Functor::new(&ctx);
        let quad = canonical_ngon(4, &path(10, 3), &fan(4)).unwrap();
        let r = f.verify_loop("x", &quad, &[Move::T { s: 1, t: 0 }], Sanity::Strict, None);
        assert_eq!(r.unwrap_err(), QtError::NotALoop);
    }

    #[test]
    fn torus_seed() {
        let t = once_punctured_torus(1.0, 2f64.sqrt()).unwrap();
        assert!(t.is_sane());
        assert!(!once_punctured_torus(1.0, 1.0).map(|t| t.is_sane()).unwrap_or(false));
        // T(0,1) flips c, needs λ₂λ₁ = (−1, α+β) non-singular
        assert!(once_punctured_torus(1.0, -1.0).is_ok());
        let blocked = once_punctured_torus(1.0, -1.0).unwrap();
        assert!(blocked.is_sane());
        assert!(matches!(blocked.move_t(0, 1), Err(QtError::RegularityViolation(_))));
        // TInv(0,1) flips b, needs λ₁λ₃ = (−1, β−2α) non-singular
        let blocked = once_punctured_torus(1.0, 2.0).unwrap();
        assert!(matches!(blocked.move_tinv(0, 1), Err(QtError::RegularityViolation(_))));
        // alternative branch: λ₁λ₂λ₁ = λ₂
        let alt = once_punctured_torus_alt(1.5, 0.4).unwrap();
        let (a, b) = (alt.weight(EDGE_A), alt.weight(EDGE_B));
        assert!(a.mul(&b).mul(&a).approx_eq(&b, 1e-12));
        assert!(alt.is_sane());
    }

    #[test]
    fn torus_exploration_small() {
        let rep = opt_torus_explore(1.0, 2f64.sqrt(), 3).unwrap();
        assert!(rep.strictly_increasing, "{:?}", rep.counts);
        assert!(rep.invariants_hold, "{:?}", rep.invariant_failures);
        assert!(!rep.lambda1_flip_ever_allowed);
        assert!(rep.seed_flips["lambda3"].allowed);
        assert!(rep.seed_flips["lambda2"].allowed);
        assert!(!rep.seed_flips["lambda1"].allowed);
        assert!(rep.dot.starts_with("digraph"));
        assert!(opt_torus_explore(1.0, 1.0, 1).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let obj = canonical_ngon(4, &path(11, 3), &fan(4)).unwrap();
        let v = obj.to_json();
        let back: LdTriangulation = serde_json::from_value(v).unwrap();
        assert_eq!(back, obj);
    }
}
